import time
from dataclasses import replace

import numpy as np
import pytest

from clc.codec import CodecConfig, compress, decompress, side_info_bits
from clc.dictionary import DictConfig, build_dictionary
from clc.entropy.bitstream import read_bitstream
from clc.entropy.latent_coding import decode_hyper, hyper_bits
from clc.errors import DictionaryMismatch, InvalidArgument, MalformedBitstream
from clc.kvcache import KvCache
from clc.metrics import psnr
from clc.synthetic import corpus, natural_image
from clc.transforms import HYPER_STEP


@pytest.mark.parametrize("cfg", [CodecConfig(), CodecConfig(no_cond=True), CodecConfig(refs=1, step=4.0, no_align=True)])
def test_round_trip_matches_encoder(small_dict, cfg, rng):
    img = natural_image(rng, 72, 88)
    r = compress(img, small_dict, cfg)
    out = decompress(r.data, small_dict)
    np.testing.assert_array_equal(out, r.recon)
    assert psnr(img, out) == r.psnr
    assert compress(img, small_dict, cfg).data == r.data


def test_grey_and_odd_sizes(small_dict, rng):
    grey = rng.integers(0, 256, (37, 53), dtype=np.uint8)
    r = compress(grey, small_dict, CodecConfig(step=2.0))
    out = decompress(r.data, small_dict)
    assert out.shape == grey.shape
    np.testing.assert_array_equal(out, r.recon)


def test_constant_image_costs_hyper_only(small_dict):
    # AC residuals are all zero and their groups are skipped: payload is header,
    # hyper and the DC group
    img = np.full((64, 64, 3), 117, np.uint8)
    r = compress(img, small_dict, CodecConfig(no_cond=True))
    assert r.psnr == np.inf
    bs = read_bitstream(r.data)
    hyper = decode_hyper(bs.hyper, (3, 8, 4, 4), HYPER_STEP)
    assert len(bs.hyper) == pytest.approx(hyper_bits(hyper) / 8, abs=16)
    assert sum(map(len, bs.slices[1:])) <= 7 * 2


def test_psnr_monotone_in_step(small_dict, rng):
    img = natural_image(rng, 64, 64)
    q = [compress(img, small_dict, CodecConfig(step=s)).psnr for s in (0.5, 1, 2, 4, 8)]
    b = [compress(img, small_dict, CodecConfig(step=s)).bits for s in (0.5, 1, 2, 4, 8)]
    assert all(np.isfinite(q))
    assert all(x > y for x, y in zip(q, q[1:]))
    assert all(x > y for x, y in zip(b, b[1:]))


def test_wrong_dictionary(small_dict, rng):
    other = build_dictionary(corpus(12, 20, 128, 128), DictConfig(16, 16, 64, 30, 0))
    data = compress(natural_image(rng, 32, 32), small_dict).data
    with pytest.raises(DictionaryMismatch):
        decompress(data, other)


def test_damaged_streams(small_dict, rng):
    data = compress(natural_image(rng, 48, 48), small_dict).data
    for cut in (4, len(data) // 2, len(data) - 1):
        with pytest.raises(MalformedBitstream):
            decompress(data[:cut], small_dict)
    with pytest.raises(MalformedBitstream):
        decompress(b"XXXX" + data[4:], small_dict)


def test_bad_config(small_dict):
    img = np.zeros((16, 16, 3), np.uint8)
    with pytest.raises(InvalidArgument):
        compress(img, small_dict, CodecConfig(step=0.0))
    with pytest.raises(InvalidArgument):
        compress(img, small_dict, CodecConfig(refs=300))


def test_reencode_idempotent(small_dict, rng):
    # the second pass, measured against its own input, loses no more than the first
    img = natural_image(rng, 64, 80)
    for step in (1.0, 4.0, 8.0):
        cfg = CodecConfig(step=step)
        r1 = compress(img, small_dict, cfg)
        r2 = compress(decompress(r1.data, small_dict), small_dict, cfg)
        assert r2.psnr >= r1.psnr - 0.01


def test_cache_never_changes_bytes(correlated):
    d, inputs = correlated
    cache = KvCache()
    for img in inputs[:3]:
        for _ in range(2):
            assert compress(img, d, cache=cache).data == compress(img, d).data


def test_self_referential_cond_beats_nocond(correlated):
    d, inputs = correlated
    for img in inputs[:3]:
        on = compress(img, d, CodecConfig())
        off = compress(img, d, CodecConfig(no_cond=True))
        assert on.bits < off.bits


def test_side_info_accounting(small_dict, rng):
    img = natural_image(rng, 512, 512)
    r = compress(img, small_dict, CodecConfig(step=1.0))
    assert r.side_bits == side_info_bits(3, 2, 32, 32)
    assert r.side_bits / r.bits < 0.015


def test_runtime_512(small_dict, rng):
    img = natural_image(rng, 512, 512)
    compress(img, small_dict)  # warm the jit caches
    t = time.perf_counter()
    r = compress(img, small_dict)
    decompress(r.data, small_dict)
    assert time.perf_counter() - t < 4.0


@pytest.mark.parametrize("shape", [(74, 10, 3), (9, 40), (3, 3, 3)])
def test_slivers_below_feature_size(small_dict, rng, shape):
    img = rng.integers(0, 256, shape, dtype=np.uint8)
    r = compress(img, small_dict)
    np.testing.assert_array_equal(decompress(r.data, small_dict), r.recon)
    assert r.entry_ids
