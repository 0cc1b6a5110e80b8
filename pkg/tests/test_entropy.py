import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clc.conditioning import ConditioningLatent
from clc.entropy.bitstream import Bitstream, Header, read_bitstream, write_bitstream
from clc.entropy.latent_coding import (
    SliceSchedule,
    decode_hyper,
    decode_latent,
    encode_hyper,
    encode_latent,
    estimate_rate,
    hyper_bits,
    quantize_pass,
    quantize_residual,
)
from clc.entropy.model import (
    ALPHABET,
    TABLE_TOTAL,
    freq_table,
    gaussian_bin_mass,
    gaussian_bin_prob,
    gaussian_table,
    laplace_table,
)
from clc.entropy.rangecoder import RangeDecoder, RangeEncoder, rc_decode_symbol, rc_encode_symbol
from clc.errors import InvalidArgument, MalformedBitstream
from clc.synthetic import corpus
from clc.transforms import HYPER_STEP, HyperLatent, analysis, hyper_analysis


def _encode(symbols, cdf):
    enc = RangeEncoder(16)
    total = int(cdf[-1])
    for s in symbols:
        rc_encode_symbol(enc, int(cdf[s]), int(cdf[s + 1]), total)
    return enc.finish()


def _decode(data, cdf, n):
    dec = RangeDecoder(data)
    out = [dec.decode(cdf) for _ in range(n)]
    dec.finish()
    return out


def test_uniform_256_one_byte_per_symbol(rng):
    cdf = np.arange(257)
    sym = rng.integers(0, 256, 10_000)
    data = _encode(sym, cdf)
    assert abs(len(data) - 10_000) <= 10
    assert _decode(data, cdf, 10_000) == sym.tolist()


def test_single_symbol_alphabet():
    cdf = np.array([0, 1])
    data = _encode([0] * 5000, cdf)
    assert len(data) <= 1
    assert _decode(data, cdf, 5000) == [0] * 5000


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.integers(2, 40))
def test_range_coder_fuzz(seed, n, alphabet):
    g = np.random.default_rng(seed)
    total = int(g.choice([alphabet, 4096, 65536]))
    freq = freq_table(g.dirichlet(np.full(alphabet, 0.3)), total)
    cdf = np.concatenate([[0], np.cumsum(freq)])
    sym = g.choice(alphabet, size=n, p=freq / total)
    data = _encode(sym, cdf)
    assert _decode(data, cdf, n) == sym.tolist()


def test_rc_decode_symbol_target():
    cdf = np.array([0, 3, 10])
    data = _encode([1, 0, 1], cdf)
    dec = RangeDecoder(data)
    v = rc_decode_symbol(dec, 10)
    assert 3 <= v < 10


def test_truncated_stream_detected(rng):
    cdf = np.arange(257)
    data = _encode(rng.integers(0, 256, 500), cdf)
    with pytest.raises(MalformedBitstream):
        _decode(data[:-8], cdf, 500)
    with pytest.raises(InvalidArgument):
        RangeEncoder().encode(3, 3, 10)


def test_bin_probabilities():
    p0 = gaussian_bin_prob(0.0, 1.0, 0)
    oracle = float(mpmath.ncdf(0.5) - mpmath.ncdf(-0.5))
    assert p0 == pytest.approx(oracle, abs=1e-12)
    assert round(p0, 6) == 0.382925
    assert gaussian_bin_mass(0.0, 1.0, 0) == pytest.approx(oracle, abs=1e-12)
    assert gaussian_bin_prob(3.0, 0.04, 3) > 1 - 1e-12
    for k in range(6):
        assert gaussian_bin_prob(0.0, 2.3, k) == gaussian_bin_prob(0.0, 2.3, -k)
    with pytest.raises(InvalidArgument):
        gaussian_bin_prob(0.0, 0.01, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.04, 300.0))
def test_gaussian_table_valid(sigma):
    cdf = gaussian_table(sigma)
    f = np.diff(cdf)
    assert cdf[0] == 0 and cdf[-1] == TABLE_TOTAL and len(f) == ALPHABET
    assert np.all(f >= 1)
    # remainder ties break by index, so mirror bins may differ by one count
    assert np.abs(f - f[::-1]).max() <= 1
    assert np.all(np.diff(laplace_table()) >= 1)


def test_quantize_residual_examples():
    assert quantize_residual(1.5, 1.5) == (0, 1.5)
    assert quantize_residual(2.5, 2.0, 1.0)[0] == 1
    assert quantize_residual(1.5, 2.0, 1.0)[0] == -1
    s, r = quantize_residual(3.2, 1.0, 1.0)
    assert s == 2 and r == pytest.approx(3.0)


@pytest.fixture(scope="module")
def lat():
    return analysis(corpus(8, 1, 64, 96)[0])


def test_exact_conditioning_costs_nothing(lat):
    sched = SliceSchedule(8)
    cond = ConditioningLatent(lat.data.copy(), np.zeros((lat.blocks_y, lat.blocks_x)), None)
    sym, recon = quantize_pass(lat, cond, sched, 1.0)
    assert np.all(sym == 0)
    hyper = hyper_analysis(lat.with_data(lat.data - recon.data), 8)
    enc = encode_latent(lat, cond, hyper, sched, 1.0)
    assert all(len(p) <= 2 for p in enc.payloads)


def test_encode_decode_exact_and_deterministic(lat, rng):
    sched = SliceSchedule(8)
    cond = ConditioningLatent(lat.data + rng.normal(0, 5, lat.data.shape), np.full((lat.blocks_y, lat.blocks_x), 0.3), None)
    for c in (None, cond):
        sym, recon = quantize_pass(lat, c, sched, 2.0)
        mu = recon.data - sym * 2.0
        hyper = hyper_analysis(lat.with_data(lat.data - mu), 8)
        enc = encode_latent(lat, c, hyper, sched, 2.0)
        assert enc.payloads == encode_latent(lat, c, hyper, sched, 2.0).payloads
        dec = decode_latent(enc.payloads, c, hyper, sched, 2.0, lat)
        assert dec.data.tobytes() == enc.recon.data.tobytes()
        bits = 8 * sum(len(p) for p in enc.payloads) + 8 * len(encode_hyper(hyper))
        est = estimate_rate(lat, c, hyper, sched, 2.0)
        assert abs(bits - est) <= 0.005 * est + 64
        with pytest.raises(MalformedBitstream):
            decode_latent([p[: len(p) // 2] for p in enc.payloads], c, hyper, sched, 2.0, lat)


def test_flat_image_rate_matches_unconditional():
    flat = analysis(np.full((64, 64, 3), 90, np.uint8))
    sched = SliceSchedule(8)
    zero = ConditioningLatent(np.zeros_like(flat.data), np.ones((4, 4)), None)
    hyper = hyper_analysis(flat, 8)
    a = sum(map(len, encode_latent(flat, zero, hyper, sched, 1.0).payloads))
    b = sum(map(len, encode_latent(flat, None, hyper, sched, 1.0).payloads))
    assert a == b


def test_hyper_round_trip_and_size(rng):
    zero = HyperLatent(np.zeros((3, 8, 10, 10), np.int16))
    # static model: the zero code is the mode, so this is the cheapest grid of its size
    assert abs(len(encode_hyper(zero)) - hyper_bits(zero) / 8) <= 16
    assert hyper_bits(zero) < hyper_bits(HyperLatent(np.full_like(zero.codes, 3)))
    codes = HyperLatent(rng.integers(-64, 65, (3, 8, 6, 7)).astype(np.int16))
    data = encode_hyper(codes)
    np.testing.assert_array_equal(decode_hyper(data, codes.codes.shape, HYPER_STEP).codes, codes.codes)
    assert abs(len(data) - hyper_bits(codes) / 8) <= 16
    big = HyperLatent(np.array([[[[300, -1000, 5]]]], np.int16))
    np.testing.assert_array_equal(decode_hyper(encode_hyper(big), (1, 1, 1, 3), HYPER_STEP).codes, big.codes)


def test_lemma_rate_closed_form():
    from clc.theory import lemma_rate

    closed = float(mpmath.log(2 * mpmath.pi * mpmath.e) / (2 * mpmath.log(2)))
    assert lemma_rate([[1.0]]) == pytest.approx(closed, abs=1e-12)
    assert abs(lemma_rate([[1.0]]) - 2.047) < 1e-3


def _header(**kw):
    base = dict(width=33, height=17, channels=3, p=16, m=2, k=8, step=1.5, window=2,
                w0=4.0, w1=-8.0, dict_hash=bytes(range(32)), entry_ids=[7, 2])
    base.update(kw)
    return Header(**base)


def test_bitstream_round_trip_and_damage():
    bs = Bitstream(_header(), b"\x01\x02", b"hyp", [bytes([i]) * i for i in range(8)])
    data = write_bitstream(bs)
    back = read_bitstream(data)
    assert back.header == bs.header
    assert back.records == bs.records and back.hyper == bs.hyper and back.slices == bs.slices
    for cut in (1, 10, len(data) - 1):
        with pytest.raises(MalformedBitstream):
            read_bitstream(data[:cut])
    with pytest.raises(MalformedBitstream):
        read_bitstream(data + b"\x00")
    with pytest.raises(MalformedBitstream):
        read_bitstream(b"JUNK" + data[4:])
