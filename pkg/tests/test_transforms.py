import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clc.transforms import (
    HYPER_STEP,
    SIGMA_MIN,
    Latent,
    analysis,
    dct_matrix,
    hyper_analysis,
    hyper_synthesis,
    slice_groups,
    synthesis,
    zigzag_order,
)


def test_dct_orthonormal():
    for p in (4, 8, 16):
        d = dct_matrix(p)
        np.testing.assert_allclose(d @ d.T, np.eye(p), atol=1e-12)


def test_zigzag_jpeg_4x4():
    assert zigzag_order(4).tolist() == [0, 1, 4, 8, 5, 2, 3, 6, 9, 12, 13, 10, 7, 11, 14, 15]
    assert slice_groups(16, 8).shape == (8, 32)


def test_constant_128_is_zero_latent():
    assert np.all(analysis(np.full((32, 48, 3), 128, np.uint8)).data == 0)


def test_constant_block_dc_only():
    c = 200
    lat = analysis(np.full((8, 8), c, np.uint8), p=8)
    assert lat.data[0, 0, 0] == pytest.approx((c - 128) * 8, abs=1e-10)
    np.testing.assert_allclose(lat.data[1:], 0, atol=1e-10)


def test_parseval(rng):
    img = rng.integers(0, 256, (64, 80, 3), dtype=np.uint8)
    lat = analysis(img)
    assert np.linalg.norm(lat.data) == pytest.approx(np.linalg.norm(img.astype(float) - 128), rel=1e-12)


def test_zero_latent_and_dc_inverse():
    lat = Latent(np.zeros((64, 2, 3)), 8, 1, 16, 24)
    np.testing.assert_array_equal(synthesis(lat), 128)
    data = np.zeros((64, 2, 3))
    data[0, 1, 2] = (57 - 128) * 8
    out = synthesis(Latent(data, 8, 1, 16, 24))[:, :, 0]
    np.testing.assert_array_equal(out[8:16, 16:24], 57)
    assert np.all(out[:8] == 128)


images = st.tuples(st.integers(1, 40), st.integers(1, 40), st.sampled_from([1, 3])).flatmap(
    lambda s: arrays(np.uint8, s)
)


@settings(max_examples=80, deadline=None)
@given(images, st.sampled_from([4, 8, 16]))
def test_round_trip_exact(img, p):
    np.testing.assert_array_equal(synthesis(analysis(img, p)), img)


def test_hyper_examples():
    zero = Latent(np.zeros((256, 1, 1)), 16, 1, 16, 16)
    assert np.all(hyper_analysis(zero).codes == -8 / HYPER_STEP)
    np.testing.assert_allclose(hyper_synthesis(hyper_analysis(zero)), SIGMA_MIN)
    ones = Latent(np.ones((256, 1, 1)), 16, 1, 16, 16)
    assert np.all(hyper_analysis(ones).codes == 0)
    np.testing.assert_allclose(hyper_synthesis(hyper_analysis(ones)), 1.0)
    twos = Latent(np.full((256, 1, 1), -2.0), 16, 1, 16, 16)
    assert np.all(hyper_analysis(twos).codes == 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_hyper_within_one_step_of_rms(seed, scale):
    g = np.random.default_rng(seed)
    lat = Latent(g.normal(size=(3 * 256, 2, 2)) * scale, 16, 3, 32, 32)
    sig = hyper_synthesis(hyper_analysis(lat))
    v = lat.plane_view()[:, slice_groups(16, 8)]
    rms = np.sqrt(np.mean(v * v, axis=2))
    # the sigma floor only ever raises the scale
    target = np.log2(np.maximum(np.clip(rms, 2.0 ** -8, 2.0 ** 8), SIGMA_MIN))
    assert np.all(np.abs(np.log2(sig) - target) <= HYPER_STEP / 2 + 1e-9)


def test_512_speed(rng):
    import time

    img = rng.integers(0, 256, (512, 512, 3), dtype=np.uint8)
    t = time.perf_counter()
    out = synthesis(analysis(img))
    assert time.perf_counter() - t < 1.0
    np.testing.assert_array_equal(out, img)
