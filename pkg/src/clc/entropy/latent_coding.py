"""Slice-ordered conditional coding of a latent and of its hyper codes.

Coding order: slice, block row, block column, colour plane, then the
slice's coefficients in zig-zag order.  Every slice is its own range-coder
stream.  The mean of each coefficient fuses a causal neighbour prediction
(left/top reconstructed blocks of the same channel) with the conditioning
latent; the scale comes from the hyper codes.  Residual symbols are coded
under a zero-mean model, so decoding symbols never needs the mean, and one
shared kernel turns symbols into reconstructions on both sides.

A hyper code also bounds every residual in its group: |r| <= RMS * sqrt(n).
Groups whose bound lies below half a quantization step can only hold zero
symbols, so they are skipped on both sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ContractViolation, InvalidArgument, MalformedBitstream
from ..transforms import HYPER_CLAMP, HyperLatent, Latent, hyper_synthesis, slice_groups
from . import rangecoder as rc
from .model import (
    ESCAPE,
    HYPER_SCALE,
    SYMBOL_MAX,
    TABLE_TOTAL,
    effective_sigma,
    gaussian_table,
    laplace_table,
)

__all__ = [
    "SliceSchedule",
    "EncodedLatent",
    "quantize_residual",
    "round_half_away",
    "encode_latent",
    "decode_latent",
    "quantize_pass",
    "symbol_bits",
    "encode_hyper",
    "decode_hyper",
    "hyper_bits",
    "STREAM_FLUSH_BITS",
    "estimate_rate",
]

STREAM_FLUSH_BITS = 8.0  # typical flush cost of one range-coder stream


@dataclass(frozen=True)
class SliceSchedule:
    k: int = 8

    def groups(self, p: int) -> np.ndarray:
        return slice_groups(p, self.k)

    def slice_of_channel(self, p: int) -> np.ndarray:
        out = np.empty(p * p, dtype=np.int64)
        for s, g in enumerate(self.groups(p)):
            out[g] = s
        return out

    def order(self, like: Latent) -> list[np.ndarray]:
        """Flat indices into ``like.data`` per slice, in coding order."""
        p, planes = like.p, like.planes
        by, bx = like.blocks_y, like.blocks_x
        nb = by * bx
        out = []
        for g in self.groups(p):
            ch = (np.arange(planes)[:, None] * p * p + g[None, :]).reshape(-1)  # plane-major
            blocks = np.arange(nb)
            out.append((ch[None, :] * nb + blocks[:, None]).reshape(-1))
        return out

    def hyper_index(self, like: Latent) -> list[np.ndarray]:
        """For each slice, the flat index into the hyper code grid of each coded element."""
        p, planes = like.p, like.planes
        nb = like.blocks_y * like.blocks_x
        per = p * p // self.k
        out = []
        for s in range(self.k):
            pl = np.repeat(np.arange(planes), per)
            idx = (pl[None, :] * self.k + s) * nb + np.arange(nb)[:, None]
            out.append(idx.reshape(-1))
        return out


@dataclass
class EncodedLatent:
    payloads: list[bytes]
    recon: Latent
    symbols: np.ndarray  # in latent layout


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_residual(y: float, mu: float, step: float = 1.0) -> tuple[int, float]:
    s = int(round_half_away((y - mu) / step))
    return s, s * step + mu


@njit(cache=True)
def _fuse_kernel(order, values, y_a, alpha, step, by, bx, decode, recon, symbols):
    """Shared quantize (encode) / reconstruct (decode) pass in coding order."""
    nb = by * bx
    for t in range(order.shape[0]):
        f = order[t]
        b = f % nb
        row = b // bx
        col = b % bx
        ctx = 0.0
        cnt = 0
        if col > 0:
            ctx += recon[f - 1]
            cnt += 1
        if row > 0:
            ctx += recon[f - bx]
            cnt += 1
        if cnt == 2:
            ctx *= 0.5
        a = alpha[b]
        mu = a * ctx + (1.0 - a) * y_a[f]
        if decode:
            s = symbols[f]
        else:
            r = (values[f] - mu) / step
            s = math.floor(abs(r) + 0.5)
            if r < 0:
                s = -s
            symbols[f] = np.int64(s)
            s = symbols[f]
        recon[f] = s * step + mu


def _prep(like: Latent, cond, step: float):
    if not step > 0:
        raise InvalidArgument("quantization step must be positive")
    nb = like.blocks_y * like.blocks_x
    if cond is None:
        y_a = np.zeros(like.data.size)
        alpha = np.ones(nb)
    else:
        y_a = np.ascontiguousarray(cond.data, dtype=np.float64).reshape(-1)
        alpha = np.ascontiguousarray(cond.alpha, dtype=np.float64).reshape(-1)
        if y_a.size != like.data.size or alpha.size != nb:
            raise InvalidArgument("conditioning latent does not match the target shape")
    return y_a, alpha


def quantize_pass(y: Latent, cond, schedule: SliceSchedule, step: float):
    """Symbols and reconstruction for ``y`` (encoder side)."""
    y_a, alpha = _prep(y, cond, step)
    order = np.concatenate(schedule.order(y))
    recon = np.zeros(y.data.size)
    symbols = np.zeros(y.data.size, dtype=np.int64)
    values = np.ascontiguousarray(y.data, dtype=np.float64).reshape(-1)
    _fuse_kernel(order, values, y_a, alpha, float(step), y.blocks_y, y.blocks_x, False, recon, symbols)
    return symbols.reshape(y.data.shape), y.with_data(recon.reshape(y.data.shape))


def _reconstruct(symbols: np.ndarray, like: Latent, cond, schedule: SliceSchedule, step: float) -> Latent:
    y_a, alpha = _prep(like, cond, step)
    order = np.concatenate(schedule.order(like))
    recon = np.zeros(like.data.size)
    sym = np.ascontiguousarray(symbols, dtype=np.int64).reshape(-1)
    _fuse_kernel(order, recon, y_a, alpha, float(step), like.blocks_y, like.blocks_x, True, recon, sym)
    return like.with_data(recon.reshape(like.data.shape))


def _tables(hyper: HyperLatent, step: float, group: int):
    """Stacked cumulative tables, one per distinct hyper code, the code -> row
    map, and which rows are known to hold only zero symbols."""
    codes = hyper.codes.reshape(-1).astype(np.int64)
    uniq, inv = np.unique(codes, return_inverse=True)
    sig = hyper_synthesis(HyperLatent(uniq.astype(np.int16), hyper.step))
    cdfs = np.stack([gaussian_table(effective_sigma(float(s), step)) for s in sig])
    # largest RMS that still rounds to the code; the top code is open-ended
    rms_max = np.exp2((uniq + 0.5) * hyper.step)
    skip = (rms_max * math.sqrt(group) * (1.0 + 1e-6) < 0.5 * step) & (uniq * hyper.step < HYPER_CLAMP)
    return np.ascontiguousarray(cdfs), inv.astype(np.int64), skip


def _coded(rows: np.ndarray, skip: np.ndarray) -> np.ndarray:
    return ~skip[rows]


@njit(cache=True)
def _encode_stream(syms, rows, cdfs, out, st):
    rc.enc_init(st)
    total = cdfs[0, cdfs.shape[1] - 1]
    for t in range(syms.shape[0]):
        s = syms[t]
        cdf = cdfs[rows[t]]
        while True:
            c = s
            if c > SYMBOL_MAX:
                c = SYMBOL_MAX
            elif c < -SYMBOL_MAX:
                c = -SYMBOL_MAX
            i = c + SYMBOL_MAX
            rc.enc_put(st, out, cdf[i], cdf[i + 1] - cdf[i], total)
            if c != SYMBOL_MAX and c != -SYMBOL_MAX:
                break
            s -= c
    return rc.enc_finish(st, out)


@njit(cache=True)
def _decode_stream(data, rows, cdfs, syms, st, max_chunks):
    rc.dec_init(st, data)
    n_sym = cdfs.shape[1] - 1
    total = cdfs[0, n_sym]
    for t in range(rows.shape[0]):
        cdf = cdfs[rows[t]]
        acc = 0
        done = False
        for _ in range(max_chunks):
            v = rc.dec_target(st, total)
            if st[3] != 0:
                return st[3]
            lo, hi = 0, n_sym
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if cdf[mid] <= v:
                    lo = mid
                else:
                    hi = mid
            rc.dec_consume(st, data, cdf[lo], cdf[lo + 1] - cdf[lo], total)
            if st[3] != 0:
                return st[3]
            c = lo - SYMBOL_MAX
            acc += c
            if c != SYMBOL_MAX and c != -SYMBOL_MAX:
                done = True
                break
        if not done:
            return 5
        syms[t] = acc
    return rc.dec_status(st, data)


def _stream_capacity(syms: np.ndarray) -> int:
    chunks = np.abs(syms) // SYMBOL_MAX + 1
    return int(2 * chunks.sum()) + 16


def encode_latent(y: Latent, cond, hyper: HyperLatent, schedule: SliceSchedule, step: float) -> EncodedLatent:
    symbols, recon = quantize_pass(y, cond, schedule, step)
    cdfs, code_row, skip = _tables(hyper, step, y.p * y.p // schedule.k)
    flat = symbols.reshape(-1)
    payloads = []
    for order, hidx in zip(schedule.order(y), schedule.hyper_index(y)):
        rows = code_row[hidx]
        keep = _coded(rows, skip)
        if np.any(flat[order[~keep]]):
            raise ContractViolation("hyper codes do not bound the residual; compute them from y - mu")
        syms = np.ascontiguousarray(flat[order[keep]])
        rows = np.ascontiguousarray(rows[keep])
        out = np.zeros(_stream_capacity(syms), dtype=np.uint8)
        n = _encode_stream(syms, rows, cdfs, out, np.zeros(5, dtype=np.int64))
        payloads.append(out[1:n].tobytes())
    return EncodedLatent(payloads, recon, symbols)


def decode_latent(payloads, cond, hyper: HyperLatent, schedule: SliceSchedule, step: float, like: Latent) -> Latent:
    """Inverse of :func:`encode_latent`; ``like`` supplies the latent geometry."""
    if len(payloads) != schedule.k:
        raise MalformedBitstream(f"expected {schedule.k} slice payloads, got {len(payloads)}")
    expect = (like.planes, schedule.k, like.blocks_y, like.blocks_x)
    if hyper.codes.shape != expect:
        raise MalformedBitstream(f"hyper grid {hyper.codes.shape} does not match {expect}")
    cdfs, code_row, skip = _tables(hyper, step, like.p * like.p // schedule.k)
    symbols = np.zeros(like.data.size, dtype=np.int64)
    for k, (data, order, hidx) in enumerate(zip(payloads, schedule.order(like), schedule.hyper_index(like))):
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        rows = code_row[hidx]
        keep = _coded(rows, skip)
        order = order[keep]
        rows = np.ascontiguousarray(rows[keep])
        syms = np.zeros(order.shape[0], dtype=np.int64)
        # a residual of at most 2^31 needs fewer than 2^24 continuation chunks; cap far lower
        status = _decode_stream(buf, rows, cdfs, syms, np.zeros(4, dtype=np.int64), 1 << 16)
        if status != 0:
            raise MalformedBitstream(f"slice {k} payload is damaged (status {status})")
        symbols[order] = syms
    return _reconstruct(symbols.reshape(like.data.shape), like, cond, schedule, step)


@njit(cache=True)
def _bits_kernel(syms, rows, cdfs):
    n_sym = cdfs.shape[1] - 1
    total = cdfs[0, n_sym]
    bits = 0.0
    for t in range(syms.shape[0]):
        s = syms[t]
        cdf = cdfs[rows[t]]
        while True:
            c = min(max(s, -SYMBOL_MAX), SYMBOL_MAX)
            i = c + SYMBOL_MAX
            bits -= math.log2((cdf[i + 1] - cdf[i]) / total)
            if c != SYMBOL_MAX and c != -SYMBOL_MAX:
                break
            s -= c
    return bits


def symbol_bits(symbols: np.ndarray, like: Latent, hyper: HyperLatent, schedule: SliceSchedule, step: float) -> list[float]:
    """Ideal code length of each slice under the integer tables actually used."""
    cdfs, code_row, skip = _tables(hyper, step, like.p * like.p // schedule.k)
    flat = symbols.reshape(-1)
    out = []
    for o, h in zip(schedule.order(like), schedule.hyper_index(like)):
        rows = code_row[h]
        keep = _coded(rows, skip)
        out.append(float(_bits_kernel(np.ascontiguousarray(flat[o[keep]]), np.ascontiguousarray(rows[keep]), cdfs)))
    return out


@njit(cache=True)
def _encode_hyper_kernel(codes, cdf, out, st):
    rc.enc_init(st)
    total = cdf[cdf.shape[0] - 1]
    esc = cdf.shape[0] - 2
    for t in range(codes.shape[0]):
        c = codes[t]
        if -SYMBOL_MAX <= c <= SYMBOL_MAX:
            i = c + SYMBOL_MAX
            rc.enc_put(st, out, cdf[i], cdf[i + 1] - cdf[i], total)
        else:
            rc.enc_put(st, out, cdf[esc], cdf[esc + 1] - cdf[esc], total)
            raw = c & 0xFFFF
            rc.enc_put(st, out, raw >> 8, 1, 256)
            rc.enc_put(st, out, raw & 0xFF, 1, 256)
    return rc.enc_finish(st, out)


@njit(cache=True)
def _decode_hyper_kernel(data, cdf, codes, st):
    rc.dec_init(st, data)
    total = cdf[cdf.shape[0] - 1]
    n_sym = cdf.shape[0] - 1
    esc = n_sym - 1
    for t in range(codes.shape[0]):
        v = rc.dec_target(st, total)
        if st[3] != 0:
            return st[3]
        lo, hi = 0, n_sym
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cdf[mid] <= v:
                lo = mid
            else:
                hi = mid
        rc.dec_consume(st, data, cdf[lo], cdf[lo + 1] - cdf[lo], total)
        if lo == esc:
            hi_b = rc.dec_target(st, 256)
            rc.dec_consume(st, data, hi_b, 1, 256)
            lo_b = rc.dec_target(st, 256)
            rc.dec_consume(st, data, lo_b, 1, 256)
            raw = (hi_b << 8) | lo_b
            codes[t] = raw - 65536 if raw >= 32768 else raw
        else:
            codes[t] = lo - SYMBOL_MAX
        if st[3] != 0:
            return st[3]
    return rc.dec_status(st, data)


def encode_hyper(hyper: HyperLatent) -> bytes:
    """Static Laplace model (scale 8) with an escape to a raw 16-bit value."""
    codes = np.ascontiguousarray(hyper.codes.reshape(-1).astype(np.int64))
    if np.any(codes < -32768) or np.any(codes > 32767):
        raise InvalidArgument("hyper codes must fit in 16 bits")
    out = np.zeros(6 * codes.size + 16, dtype=np.uint8)
    n = _encode_hyper_kernel(codes, laplace_table(HYPER_SCALE), out, np.zeros(5, dtype=np.int64))
    return out[1:n].tobytes()


def decode_hyper(data: bytes, shape, step: float) -> HyperLatent:
    codes = np.zeros(int(np.prod(shape)), dtype=np.int64)
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    status = _decode_hyper_kernel(buf, laplace_table(HYPER_SCALE), codes, np.zeros(4, dtype=np.int64))
    if status != 0:
        raise MalformedBitstream(f"hyper payload is damaged (status {status})")
    return HyperLatent(codes.reshape(shape).astype(np.int16), step)


def hyper_bits(hyper: HyperLatent) -> float:
    cdf = laplace_table(HYPER_SCALE)
    freq = np.diff(cdf).astype(np.float64)
    codes = hyper.codes.reshape(-1).astype(np.int64)
    inside = np.abs(codes) <= SYMBOL_MAX
    bits = -np.sum(np.log2(freq[codes[inside] + SYMBOL_MAX] / TABLE_TOTAL))
    n_esc = int((~inside).sum())
    bits += n_esc * (16.0 - math.log2(freq[ESCAPE] / TABLE_TOTAL))
    return float(bits)


def estimate_rate(y: Latent, cond, hyper: HyperLatent, schedule: SliceSchedule, step: float, overhead_bits: float = 0.0) -> float:
    """Predicted size in bits: ideal symbol and hyper code lengths, a flush
    allowance per stream, and ``overhead_bits`` of exactly known side data."""
    symbols, _ = quantize_pass(y, cond, schedule, step)
    bits = sum(symbol_bits(symbols, y, hyper, schedule, step)) + hyper_bits(hyper)
    return bits + STREAM_FLUSH_BITS * (schedule.k + 1) + overhead_bits
