import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clc.conditioning import (
    GAIN_SCALE,
    MatchRecords,
    alpha_from_code,
    clm_align,
    clm_match,
    clm_similarity,
    cls_predict_mean,
    cls_weights,
    gain_from_code,
    pack_records,
    record_bits,
    synthesize_conditioning,
    unpack_records,
)
from clc.errors import InvalidArgument, MalformedBitstream
from clc.synthetic import corpus
from clc.transforms import analysis


@pytest.fixture(scope="module")
def scene():
    return corpus(21, 2, 96, 128)


def test_similarity_limits(rng):
    unit = lambda a: a / np.linalg.norm(a, axis=1, keepdims=True)
    y = unit(rng.normal(size=(4, 10)))
    refs = unit(rng.normal(size=(6, 10)))
    refs[2] = y[1]
    sharp = clm_similarity(y, refs, 0.01)
    assert sharp[1, 2] > 0.99
    flat = clm_similarity(y, refs, 1e3)
    np.testing.assert_allclose(flat, 1 / 6, atol=2e-3)
    refs[4] = refs[3]
    s = clm_similarity(y, refs, 0.5)
    np.testing.assert_array_equal(s[:, 3], s[:, 4])


def test_self_match(scene):
    y = analysis(scene[0])
    y_m, rec = clm_match(y, [y])
    assert np.all(rec.dx == 0) and np.all(rec.dy == 0) and np.all(rec.ref == 0)
    np.testing.assert_array_equal(y_m.data, y.data)


def test_shifted_reference_exhaustive(scene):
    img = scene[0]
    ref = analysis(np.roll(img, 16, axis=1))
    y = analysis(img)
    y_m, rec = clm_match(y, [ref])
    assert np.all(rec.dx == 1) and np.all(rec.dy == 0)
    assert np.sum((y_m.data - y.data) ** 2) == pytest.approx(0.0, abs=1e-12)


def test_noise_scores_lower(scene, rng):
    y = analysis(scene[0])
    noise = analysis(rng.integers(0, 256, scene[0].shape, dtype=np.uint8))
    _, self_rec = clm_match(y, [y])
    _, noise_rec = clm_match(y, [noise])
    assert noise_rec.score.mean() < self_rec.score.mean()


def test_align_fixed_point_and_gain(scene):
    y = analysis(scene[1])
    y_m, rec = clm_match(y, [y])
    cond, rec2 = clm_align(y, y_m, rec, [y])
    np.testing.assert_array_equal(rec2.dx, rec.dx)
    np.testing.assert_array_equal(rec2.dy, rec.dy)
    half = y.with_data(0.5 * y.data)
    y_m, rec = clm_match(y, [half])
    cond, rec = clm_align(y, y_m, rec, [half])
    # least-squares gain 2 saturates at the top code, 63/32
    assert np.all(rec.gain_code == 63)
    err = np.abs(cond.data - y.data)
    assert np.all(err <= (2 - 63 / GAIN_SCALE) * np.abs(0.5 * y.data) + 1e-9)


def test_zero_reference_gain(scene):
    y = analysis(scene[0])
    zero = y.with_data(np.zeros_like(y.data))
    y_m, rec = clm_match(y, [zero])
    cond, rec = clm_align(y, y_m, rec, [zero])
    assert np.all(rec.gain_code == 0) and np.all(cond.data == 0)


def test_cls_weights_examples():
    rec = MatchRecords.empty(2, 2)
    rec.score[:] = 1.0
    np.testing.assert_array_equal(cls_weights(rec, 0, 0), 0.5)
    assert np.all(rec.alpha_code == 8)
    cls_weights(rec, 0.0, 50.0)
    assert np.all(rec.alpha_code == 15) and np.all(alpha_from_code(rec.alpha_code) < 1)
    rec.score[:] = 0.0
    a = 1 / (1 + np.exp(4.0))
    assert round(a, 3) == 0.018
    cls_weights(rec, -4.0, 0.0)
    assert np.all(rec.alpha_code == 0)


def test_cls_predict_mean():
    c, a = np.full((4, 1, 1), 2.0), np.full((4, 1, 1), 4.0)
    np.testing.assert_array_equal(cls_predict_mean(c, a, np.ones((1, 1))), c)
    np.testing.assert_array_equal(cls_predict_mean(c, a, np.zeros((1, 1))), a)
    np.testing.assert_array_equal(cls_predict_mean(c, a, np.full((1, 1), 0.5)), 3.0)


def test_synthesis_symmetry_and_validation(scene):
    y = analysis(scene[0])
    ref = analysis(scene[1])
    y_m, rec = clm_match(y, [ref, y])
    enc, rec = clm_align(y, y_m, rec, [ref, y])
    cls_weights(rec, 4, -8)
    a = synthesize_conditioning([ref, y], rec, y)
    back = unpack_records(pack_records(rec, 2, 2), *rec.shape, 2, 2)
    b = synthesize_conditioning([ref, y], back, y)
    assert a.data.tobytes() == b.data.tobytes()
    np.testing.assert_array_equal(a.alpha, b.alpha)
    zero = rec.copy()
    zero.gain_code[:] = 0
    assert np.all(synthesize_conditioning([ref, y], zero, y).data == 0)
    bad = rec.copy()
    bad.dx[0, 0] = 3
    with pytest.raises(MalformedBitstream):
        synthesize_conditioning([ref, y], bad, y)
    bad = rec.copy()
    bad.ref[0, 0] = 2
    with pytest.raises(MalformedBitstream):
        synthesize_conditioning([ref, y], bad, y)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(1, 8), st.integers(0, 3), st.integers(0, 10_000))
def test_pack_round_trip(by, bx, m, w, seed):
    g = np.random.default_rng(seed)
    rec = MatchRecords.empty(by, bx)
    rec.ref[:] = g.integers(0, m, (by, bx))
    rec.dx[:] = g.integers(-w, w + 1, (by, bx))
    rec.dy[:] = g.integers(-w, w + 1, (by, bx))
    rec.gain_code[:] = g.integers(0, 64, (by, bx))
    rec.alpha_code[:] = g.integers(0, 16, (by, bx))
    data = pack_records(rec, m, w)
    rb, ob, gb, ab = record_bits(m, w)
    assert len(data) == by * -(-bx * (rb + 2 * ob + gb + ab) // 8)
    back = unpack_records(data, by, bx, m, w)
    for f in ("ref", "dx", "dy", "gain_code", "alpha_code"):
        np.testing.assert_array_equal(getattr(back, f), getattr(rec, f))
    with pytest.raises(MalformedBitstream):
        unpack_records(data[:-1], by, bx, m, w)


def test_record_bits_window_limit():
    with pytest.raises(InvalidArgument):
        record_bits(3, 4)
    assert gain_from_code(32) == 1.0
