"""Monte-Carlo checks of the subspace-recovery bound and of robustness to
random feature matches.

Data follow a spiked covariance model: x = U s + xi for the input and
x~ = U (rho s + sqrt(1 - rho^2) s_perp) + xi~ for its reference.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument, RegimeError
from .numerics import Subspace, sin_theta_dist, sym_eig

__all__ = [
    "SpikedModelParams",
    "BoundReport",
    "ConfigResult",
    "gen_spiked",
    "empirical_cov",
    "estimate_subspace",
    "effective_gap",
    "theorem_bound",
    "simplified_bound",
    "trial_seed",
    "run_trials",
    "verify_bound",
    "lemma_rate",
    "performance_reduction",
    "random_match_perturbation",
    "robustness_pr",
]


@dataclass(frozen=True)
class SpikedModelParams:
    d: int = 64
    r: int = 4
    lambda_s: float = 4.0  # Sigma_s = lambda_s * I_r
    sigma: float = 0.3  # noise std of the input
    sigma_ref: float = 0.3  # noise std of the reference
    rho: float = 0.0
    n: int = 400
    seed: int = 0

    @property
    def noise_var(self) -> float:
        return self.sigma ** 2 + self.sigma_ref ** 2


def effective_gap(params: SpikedModelParams) -> float:
    """lambda_min(Sigma_s) (1 - rho) - sigma^2 - sigma~^2."""
    return params.lambda_s * (1.0 - params.rho) - params.noise_var


def _check(params: SpikedModelParams) -> None:
    if params.d < 1 or params.r < 1 or params.r > params.d:
        raise InvalidArgument("need 1 <= r <= d")
    if params.n < 1:
        raise InvalidArgument("need at least one sample")
    if not 0.0 <= params.rho <= 1.0:
        raise InvalidArgument("rho must lie in [0, 1]")
    if params.sigma < 0 or params.sigma_ref < 0 or params.lambda_s < 0:
        raise InvalidArgument("variances must be non-negative")


def gen_spiked(params: SpikedModelParams, rng: np.random.Generator | None = None, basis=None):
    """Draw (X, X~, U*) with n rows each.

    ``basis`` overrides the random orthonormal U* (useful to test invariance).
    """
    _check(params)
    if effective_gap(params) <= 0:
        warnings.warn("parameters leave the positive effective-gap regime", RuntimeWarning, stacklevel=2)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    d, r, n = params.d, params.r, params.n
    if basis is None:
        q, rr = np.linalg.qr(rng.normal(size=(d, r)))
        u = q * np.sign(np.diag(rr))
    else:
        u = np.asarray(basis, dtype=np.float64)
    std = math.sqrt(params.lambda_s)
    s = rng.normal(size=(n, r)) * std
    s_perp = rng.normal(size=(n, r)) * std
    xi = rng.normal(size=(n, d)) * params.sigma
    xi_ref = rng.normal(size=(n, d)) * params.sigma_ref
    x = s @ u.T + xi
    x_ref = (params.rho * s + math.sqrt(max(1.0 - params.rho ** 2, 0.0)) * s_perp) @ u.T + xi_ref
    return x, x_ref, Subspace(u)


def empirical_cov(x) -> np.ndarray:
    """(1/n) sum x_i x_i^T, uncentred."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.shape[0] < 1:
        raise InvalidArgument("need at least one sample")
    return x.T @ x / x.shape[0]


def estimate_subspace(s, r: int, gap_tol: float = 1e-10) -> Subspace:
    """Leading r eigenvectors; a vanishing r-th gap is flagged, not fatal."""
    vals, vecs = sym_eig(s)
    if r < 1 or r > vals.shape[0]:
        raise InvalidArgument(f"rank {r} outside [1, {vals.shape[0]}]")
    degenerate = r < vals.shape[0] and abs(vals[r - 1] - vals[r]) <= gap_tol
    return Subspace(vecs[:, :r], degenerate_gap=bool(degenerate))


def theorem_bound(params: SpikedModelParams, delta: float = 0.05, c: float = 1.0) -> float:
    """C (sigma^2 + sigma~^2) sqrt(log(d/delta)/n) / effective gap."""
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    gap = effective_gap(params)
    if gap <= 0:
        raise RegimeError(f"effective gap {gap:.4g} is not positive")
    return c * params.noise_var * math.sqrt(math.log(params.d / delta) / params.n) / gap


def simplified_bound(params: SpikedModelParams, delta: float = 0.05, c: float = 1.0) -> float:
    """C sqrt(r (sigma^2 + sigma~^2) log(d/delta) / n) / ((1 - rho) lambda_min)."""
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    if effective_gap(params) <= 0:
        raise RegimeError("effective gap is not positive")
    num = math.sqrt(params.r * params.noise_var * math.log(params.d / delta) / params.n)
    return c * num / ((1.0 - params.rho) * params.lambda_s)


def trial_seed(master: int, params: SpikedModelParams, trial: int) -> int:
    """Independent stream per (master seed, configuration, trial)."""
    key = f"{master}|{params.d}|{params.r}|{params.n}|{params.rho!r}|{params.sigma!r}|{params.sigma_ref!r}|{params.lambda_s!r}|{trial}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def run_trials(params: SpikedModelParams, trials: int, master: int = 0, target: str = "innovation") -> np.ndarray:
    """sin-theta errors of the estimated subspace over independent trials.

    ``target="innovation"`` estimates span(U*) from X - X~, the part of the
    input its reference does not explain; ``"input"`` uses X alone, which
    does not depend on rho.
    """
    if target not in ("innovation", "input"):
        raise InvalidArgument(f"unknown target {target!r}")
    out = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng(trial_seed(master, params, t))
        x, x_ref, u = gen_spiked(params, rng)
        data = x - x_ref if target == "innovation" else x
        est = estimate_subspace(empirical_cov(data), params.r)
        out[t] = sin_theta_dist(est, u)
    return out


@dataclass
class ConfigResult:
    params: SpikedModelParams
    errors: np.ndarray
    bound_unit: float  # theorem_bound with C = 1
    skipped: bool = False
    reason: str = ""

    @property
    def median(self) -> float:
        return float(np.median(self.errors)) if self.errors.size else math.nan


@dataclass
class BoundReport:
    configs: list[ConfigResult]
    c_fit: float
    delta: float
    violation_rate: float
    per_config_violation: list[float]
    decay_ratios: dict = field(default_factory=dict)  # (rho) -> median(n_max)/median(n_min)
    monotone_n: bool = True
    monotone_rho: bool = True
    holdout_violation_rate: float | None = None

    @property
    def skipped(self) -> list[ConfigResult]:
        return [c for c in self.configs if c.skipped]

    def passed(self) -> bool:
        return self.violation_rate <= self.delta and self.monotone_n and self.monotone_rho


def fit_constant(ratios: np.ndarray, coverage: float) -> float:
    """Smallest C with at least ``coverage`` of error/bound ratios at or below it."""
    srt = np.sort(ratios)
    k = max(int(math.ceil(coverage * srt.size)), 1)
    return float(srt[k - 1])


def verify_bound(
    ns=(100, 400, 1600),
    rhos=(0.0, 0.5, 0.9),
    trials: int = 200,
    delta: float = 0.05,
    base: SpikedModelParams = SpikedModelParams(),
    master: int = 0,
    target: str = "innovation",
    holdout: bool = True,
) -> BoundReport:
    """Sweep (n, rho), fit one C over every trial, and check the scalings."""
    configs: list[ConfigResult] = []
    for rho in rhos:
        for n in ns:
            p = replace(base, n=int(n), rho=float(rho))
            try:
                unit = theorem_bound(p, delta, 1.0)
            except RegimeError as exc:
                configs.append(ConfigResult(p, np.zeros(0), math.nan, True, str(exc)))
                continue
            configs.append(ConfigResult(p, run_trials(p, trials, master, target), unit))
    live = [c for c in configs if not c.skipped]
    if not live:
        return BoundReport(configs, math.nan, delta, 0.0, [], {}, True, True)
    ratios = np.concatenate([c.errors / c.bound_unit for c in live])
    c_fit = fit_constant(ratios, 1.0 - delta)
    per = [float(np.mean(c.errors > c_fit * c.bound_unit)) for c in live]
    rate = float(np.mean(ratios > c_fit))

    by_rho: dict[float, list[ConfigResult]] = {}
    for c in live:
        by_rho.setdefault(c.params.rho, []).append(c)
    ratios_n, mono_n = {}, True
    for rho, cs in by_rho.items():
        cs = sorted(cs, key=lambda c: c.params.n)
        med = [c.median for c in cs]
        mono_n &= all(b <= a for a, b in zip(med, med[1:]))
        if len(cs) >= 2:
            ratios_n[rho] = med[-1] / med[0]
    mono_rho = True
    for n in sorted({c.params.n for c in live}):
        cs = sorted((c for c in live if c.params.n == n), key=lambda c: c.params.rho)
        med = [c.median for c in cs]
        mono_rho &= all(b >= a for a, b in zip(med, med[1:]))

    hold = None
    if holdout:
        extra = np.concatenate(
            [run_trials(c.params, trials, master + 1_000_003, target) / c.bound_unit for c in live]
        )
        hold = float(np.mean(extra > c_fit))
    return BoundReport(configs, c_fit, delta, rate, per, ratios_n, mono_n, mono_rho, hold)


def lemma_rate(cov) -> float:
    """(1 / (2 ln 2)) (r ln(2 pi e) + ln det Sigma_z), in bits."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    r = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise InvalidArgument("covariance must be positive definite")
    return (r * math.log(2 * math.pi * math.e) + logdet) / (2 * math.log(2))


def performance_reduction(gain_perturbed: float, gain_clean: float) -> float:
    """PR = 1 - perturbed gain / clean gain."""
    if gain_clean == 0:
        raise InvalidArgument("clean gain is zero; PR is undefined")
    return 1.0 - gain_perturbed / gain_clean


def random_match_perturbation(eps: float, seed: int, window: int):
    """Records hook replacing each block's match, with probability ``eps``,
    by a uniformly drawn (reference, offset).

    The per-block uniforms and replacement matches depend only on the seed
    and block grid, so the perturbed sets are nested in ``eps`` and paired
    across runs.
    """
    if not 0.0 <= eps <= 0.5:
        raise InvalidArgument("perturbation level must lie in [0, 0.5]")

    def hook(refs, rec):
        by, bx = rec.shape
        rng = np.random.default_rng(seed)
        u = rng.random((by, bx))
        new_ref = rng.integers(0, len(refs), size=(by, bx))
        new_dy = rng.integers(-window, window + 1, size=(by, bx))
        new_dx = rng.integers(-window, window + 1, size=(by, bx))
        hit = u < eps
        out = rec.copy()
        out.ref[hit] = new_ref[hit]
        out.dy[hit] = new_dy[hit]
        out.dx[hit] = new_dx[hit]
        return refs, out

    return hook


def robustness_pr(images, dictionary, eps_levels=(0.0, 0.1, 0.3, 0.5), steps=(1.0, 2.0, 4.0, 8.0), seed: int = 0, cfg=None):
    """PR per perturbation level, gain measured as BD-PSNR over the no-conditioning anchor.

    Returns ``(pr, gains)`` dictionaries keyed by eps.
    """
    from .codec import CodecConfig, compress
    from .metrics import bd_psnr

    cfg = cfg if cfg is not None else CodecConfig()
    for e in eps_levels:
        if not 0.0 <= e <= 0.5:
            raise InvalidArgument("perturbation level must lie in [0, 0.5]")

    def curve(**kw):
        rates, quals = [], []
        for st in steps:
            bits = pix = 0
            ps = []
            for i, img in enumerate(images):
                hook = None
                if "eps" in kw:
                    hook = random_match_perturbation(kw["eps"], seed * 1_000_003 + i, cfg.window)
                c = replace(cfg, step=st, no_cond=kw.get("no_cond", False))
                res = compress(img, dictionary, c, perturb=hook)
                bits += res.bits
                pix += res.pixels
                ps.append(res.psnr)
            rates.append(bits / pix)
            quals.append(float(np.mean(ps)))
        return np.array(rates), np.array(quals)

    anchor = curve(no_cond=True)
    gains = {e: bd_psnr(curve(eps=e), anchor) for e in eps_levels}
    clean = gains[0.0] if 0.0 in gains else bd_psnr(curve(eps=0.0), anchor)
    pr = {e: performance_reduction(g, clean) for e, g in gains.items()}
    return pr, gains
