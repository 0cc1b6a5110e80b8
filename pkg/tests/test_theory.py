import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clc.errors import InvalidArgument, RegimeError
from clc.numerics import sin_theta_dist
from clc.theory import (
    SpikedModelParams,
    empirical_cov,
    estimate_subspace,
    gen_spiked,
    lemma_rate,
    performance_reduction,
    random_match_perturbation,
    robustness_pr,
    run_trials,
    simplified_bound,
    theorem_bound,
    trial_seed,
    verify_bound,
)

BASE = SpikedModelParams()


def _corr(a, b):
    return float(np.corrcoef(a, b)[0, 1])


def test_gen_spiked_shared_factor_at_rho_one():
    p = replace(BASE, rho=1.0, sigma=0.0, sigma_ref=0.0, n=500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        x, x_ref, u = gen_spiked(p)
    np.testing.assert_allclose(x, x_ref, atol=1e-12)
    a, b = x @ u.basis, x_ref @ u.basis
    assert _corr(a[:, 0], b[:, 0]) == pytest.approx(1.0, abs=1e-12)


def test_gen_spiked_shared_factor_with_noise():
    # corr(u^T x, u^T x~) = lambda / (lambda + sigma^2) at rho = 1
    p = replace(BASE, rho=1.0, n=20000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        x, x_ref, u = gen_spiked(p)
    a, b = x @ u.basis, x_ref @ u.basis
    assert _corr(a[:, 0], b[:, 0]) == pytest.approx(4.0 / 4.09, abs=0.01)


def test_gen_spiked_independent_at_rho_zero():
    x, x_ref, u = gen_spiked(replace(BASE, n=10000))
    a, b = x @ u.basis, x_ref @ u.basis
    assert max(abs(_corr(a[:, j], b[:, j])) for j in range(BASE.r)) < 0.05


def test_gen_spiked_noiseless_recovers_exactly():
    p = replace(BASE, sigma=0.0, sigma_ref=0.0, n=BASE.r)
    x, _, u = gen_spiked(p)
    est = estimate_subspace(empirical_cov(x), p.r)
    assert sin_theta_dist(est, u) < 1e-8


def test_gen_spiked_warns_outside_regime():
    with pytest.warns(RuntimeWarning):
        gen_spiked(replace(BASE, rho=0.999, n=10))


@pytest.mark.parametrize("seed", range(5))
def test_gen_spiked_marginal_covariance(seed):
    # unit spike: sampling error of the spike block scales with lambda_s
    p = replace(BASE, d=32, n=10000, lambda_s=1.0, seed=seed)
    x, _, u = gen_spiked(p)
    target = p.lambda_s * u.basis @ u.basis.T + p.sigma ** 2 * np.eye(p.d)
    assert np.linalg.norm(empirical_cov(x) - target, 2) < 0.1


def test_empirical_cov_examples():
    # d standard basis rows, each once: (1/d) sum e_i e_i^T = I/d
    np.testing.assert_allclose(empirical_cov(np.eye(5)), np.eye(5) / 5)
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(empirical_cov(x), np.outer(x, x))
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 4))
    np.testing.assert_allclose(empirical_cov(3.0 * a), 9.0 * empirical_cov(a))
    # direct summation oracle
    np.testing.assert_allclose(empirical_cov(a), sum(np.outer(r, r) for r in a) / 7, atol=1e-12)


def test_estimate_subspace_examples():
    e = np.eye(3)
    assert sin_theta_dist(estimate_subspace(np.diag([10.0, 1.0, 0.1]), 1), e[:, :1]) < 1e-12
    est = estimate_subspace(np.diag([5.0, 5.0, 1.0]), 2)
    assert sin_theta_dist(est, e[:, :2]) < 1e-12
    assert not est.degenerate_gap
    assert estimate_subspace(np.diag([5.0, 5.0, 1.0]), 1).degenerate_gap
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(8, 3)))
    s = q @ np.diag([4.0, 2.0, 1.0]) @ q.T
    assert sin_theta_dist(estimate_subspace(s, 3), q) < 1e-8
    with pytest.raises(InvalidArgument):
        estimate_subspace(s, 9)


def test_sin_theta_rotation_invariance():
    x, _, u = gen_spiked(BASE)
    est = estimate_subspace(empirical_cov(x), BASE.r)
    rng = np.random.default_rng(5)
    r, _ = np.linalg.qr(rng.normal(size=(BASE.r, BASE.r)))
    assert sin_theta_dist(est, u.basis @ r) == pytest.approx(sin_theta_dist(est, u), abs=1e-8)
    # rotating the ambient space moves data and truth together
    q, _ = np.linalg.qr(rng.normal(size=(BASE.d, BASE.d)))
    est_q = estimate_subspace(empirical_cov(x @ q), BASE.r)
    assert sin_theta_dist(est_q, q.T @ u.basis) == pytest.approx(sin_theta_dist(est, u), abs=1e-8)


def test_theorem_bound_examples():
    b = theorem_bound(BASE, 0.05, 1.0)
    expect = 0.18 * math.sqrt(math.log(64 / 0.05) / 400) / (4.0 - 0.18)
    assert b == pytest.approx(expect, rel=1e-12)
    assert theorem_bound(replace(BASE, n=1600)) == pytest.approx(b / 2, rel=1e-12)
    assert simplified_bound(replace(BASE, n=1600)) == pytest.approx(simplified_bound(BASE) / 2, rel=1e-12)
    assert theorem_bound(replace(BASE, sigma=0.0, sigma_ref=0.0)) == 0.0
    with pytest.raises(RegimeError):
        theorem_bound(replace(BASE, rho=0.999))
    with pytest.raises(RegimeError):
        simplified_bound(replace(BASE, rho=1.0))
    with pytest.raises(InvalidArgument):
        theorem_bound(BASE, delta=1.5)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(10, 5000), st.floats(0.0, 0.9), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(8, 256),
    st.sampled_from(["n", "rho", "sigma", "sigma_ref", "d"]),
)
def test_theorem_bound_monotone(n, rho, sig, sig_ref, d, axis):
    p = replace(BASE, n=n, rho=rho, sigma=sig, sigma_ref=sig_ref, d=d)
    bumped = {
        "n": replace(p, n=n + 7), "rho": replace(p, rho=rho + 0.01), "sigma": replace(p, sigma=sig + 0.01),
        "sigma_ref": replace(p, sigma_ref=sig_ref + 0.01), "d": replace(p, d=d + 3),
    }[axis]
    try:
        a, b = theorem_bound(p), theorem_bound(bumped)
    except RegimeError:
        return
    if axis == "n":
        assert b <= a
    else:
        assert b >= a


def test_trial_seed_distinct_and_stable():
    seeds = {trial_seed(0, BASE, t) for t in range(100)}
    assert len(seeds) == 100
    assert trial_seed(0, BASE, 3) == trial_seed(0, BASE, 3)
    assert trial_seed(0, BASE, 3) != trial_seed(1, BASE, 3)
    assert trial_seed(0, BASE, 3) != trial_seed(0, replace(BASE, n=401), 3)


def test_run_trials_deterministic():
    a = run_trials(replace(BASE, n=100), 5, master=7)
    np.testing.assert_array_equal(a, run_trials(replace(BASE, n=100), 5, master=7))
    assert np.all((a > 0) & (a < 1))


def test_verify_bound_small_sweep():
    rep = verify_bound(trials=40, master=2)
    assert rep.monotone_n and rep.monotone_rho
    assert rep.violation_rate <= 0.05
    assert all(0.2 <= v <= 0.35 for v in rep.decay_ratios.values())


def test_verify_bound_records_skips():
    rep = verify_bound(ns=(100,), rhos=(0.0, 0.999), trials=5, holdout=False)
    assert len(rep.skipped) == 1 and rep.skipped[0].params.rho == 0.999
    assert "gap" in rep.skipped[0].reason


def test_lemma_rate():
    # (1/(2 ln 2)) ln(2 pi e) for r = 1, unit covariance
    assert lemma_rate([[1.0]]) == pytest.approx(2.047095585, abs=1e-9)
    assert lemma_rate(np.eye(3)) == pytest.approx(3 * 2.047095585, abs=1e-8)
    assert lemma_rate([[4.0]]) == pytest.approx(2.047095585 + 1.0, abs=1e-9)
    with pytest.raises(InvalidArgument):
        lemma_rate([[0.0]])


def test_performance_reduction():
    assert performance_reduction(1.0, 2.0) == 0.5
    assert performance_reduction(2.0, 2.0) == 0.0
    with pytest.raises(InvalidArgument):
        performance_reduction(1.0, 0.0)
    with pytest.raises(InvalidArgument):
        random_match_perturbation(0.6, 0, 2)


def test_perturbation_nested_and_paired(correlated):
    from clc.codec import CodecConfig, conditioning_for, reference_latent
    from clc.dictionary import retrieve
    from clc.features import ImagePatch
    from clc.transforms import analysis

    d, inputs = correlated
    img = inputs[0]
    y = analysis(img, 16)
    entries, _, _ = retrieve(d, None, None, ImagePatch(img), 3)
    refs = [reference_latent(d, e.id, 3, 16) for e in entries]
    _, rec = conditioning_for(y, refs, CodecConfig())
    changed = []
    for eps in (0.0, 0.1, 0.3, 0.5):
        _, out = random_match_perturbation(eps, 9, 2)(refs, rec)
        _, again = random_match_perturbation(eps, 9, 2)(refs, rec)
        np.testing.assert_array_equal(out.ref, again.ref)
        np.testing.assert_array_equal(out.gain_code, rec.gain_code)
        changed.append((out.ref != rec.ref) | (out.dy != rec.dy) | (out.dx != rec.dx))
    assert not changed[0].any()
    for a, b in zip(changed, changed[1:]):
        assert np.all(b[a])


def test_robustness_pr_zero_is_exact(correlated):
    d, inputs = correlated
    imgs = [im[:128, :128] for im in inputs[:2]]
    pr, gains = robustness_pr(imgs, d, eps_levels=(0.0, 0.5), steps=(1.0, 2.0, 4.0, 8.0))
    assert pr[0.0] == 0.0
    assert gains[0.0] > 0
    assert pr[0.5] > 0
    with pytest.raises(InvalidArgument):
        robustness_pr(imgs, d, eps_levels=(0.7,))
