"""Discretized Gaussian and Laplace symbol models with integer frequency tables."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import InvalidArgument
from ..numerics import gaussian_cdf
from ..transforms import SIGMA_MIN

__all__ = [
    "SYMBOL_MAX",
    "ALPHABET",
    "PROB_FLOOR",
    "TABLE_TOTAL",
    "gaussian_bin_mass",
    "gaussian_bin_prob",
    "gaussian_pmf",
    "freq_table",
    "gaussian_table",
    "laplace_table",
    "effective_sigma",
    "HYPER_SCALE",
    "ESCAPE",
]

SYMBOL_MAX = 255
ALPHABET = 2 * SYMBOL_MAX + 1
PROB_FLOOR = 2.0 ** -16
TABLE_TOTAL = 1 << 16
HYPER_SCALE = 8.0
ESCAPE = ALPHABET  # index of the escape symbol in the hyper model

_SUPPORT = np.arange(-SYMBOL_MAX, SYMBOL_MAX + 1)


def _check_sigma(sigma: float) -> None:
    if not sigma >= SIGMA_MIN:
        raise InvalidArgument(f"sigma {sigma} below the floor {SIGMA_MIN}")


def gaussian_bin_mass(mu: float, sigma: float, k: int) -> float:
    """Phi((k + 1/2 - mu)/sigma) - Phi((k - 1/2 - mu)/sigma), unfloored."""
    _check_sigma(sigma)
    return float(_mass(np.float64(k - mu), sigma))


def _mass(t, sigma):
    # upper-tail form in |k - mu|: exactly symmetric and accurate far out
    t = np.abs(t)
    return gaussian_cdf((0.5 - t) / sigma) - gaussian_cdf(-(t + 0.5) / sigma)


def gaussian_pmf(mu: float, sigma: float) -> np.ndarray:
    """Bin masses over [-255, 255], each floored at 2^-16, renormalised to sum 1."""
    _check_sigma(sigma)
    p = np.maximum(_mass(_SUPPORT - mu, sigma), PROB_FLOOR)
    return p / p.sum()


def gaussian_bin_prob(mu: float, sigma: float, k: int) -> float:
    """Bin mass floored at 2^-16.

    Renormalisation over the alphabet happens when the integer table is
    built, so table probabilities sit slightly below this value.
    """
    if not -SYMBOL_MAX <= k <= SYMBOL_MAX:
        raise InvalidArgument(f"bin {k} outside [-{SYMBOL_MAX}, {SYMBOL_MAX}]")
    return max(gaussian_bin_mass(mu, sigma, k), PROB_FLOOR)


def freq_table(pmf, total: int = TABLE_TOTAL) -> np.ndarray:
    """Integer frequencies >= 1 summing to ``total`` (largest-remainder rounding)."""
    p = np.asarray(pmf, dtype=np.float64)
    n = p.shape[0]
    if n > total:
        raise InvalidArgument("alphabet larger than the frequency total")
    share = p / p.sum() * (total - n)
    base = np.floor(share).astype(np.int64)
    left = total - n - int(base.sum())
    if left:
        order = np.argsort(-(share - base), kind="stable")
        base[order[:left]] += 1
    return base + 1


def effective_sigma(sigma: float, step: float) -> float:
    """Scale of the residual symbol (y - mu)/step, floored at SIGMA_MIN."""
    return max(sigma / step, SIGMA_MIN)


@lru_cache(maxsize=4096)
def gaussian_table(sigma_eff: float) -> np.ndarray:
    """Cumulative table (length ALPHABET + 1) for a zero-mean residual model."""
    f = freq_table(gaussian_pmf(0.0, sigma_eff))
    cdf = np.concatenate([[0], np.cumsum(f)]).astype(np.int64)
    cdf.setflags(write=False)
    return cdf


@lru_cache(maxsize=None)
def laplace_table(scale: float = HYPER_SCALE) -> np.ndarray:
    """Cumulative table over [-255, 255] plus a trailing escape symbol."""
    p = np.exp(-np.abs(_SUPPORT) / scale)
    tail = 2.0 * np.exp(-(SYMBOL_MAX + 0.5) / scale)
    f = freq_table(np.append(p, tail))
    cdf = np.concatenate([[0], np.cumsum(f)]).astype(np.int64)
    cdf.setflags(write=False)
    return cdf
