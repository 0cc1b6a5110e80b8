"""Byte-oriented range coder with carry propagation (LZMA style).

Encoder state is ``low`` (33 significant bits), a 32-bit ``range``, and a
pending byte plus a run of 0xFF bytes that a later carry may still bump.
Frequencies are integers with totals up to 2^16, so every operation is
exact and the output is identical on every platform.

The encoder's first output byte is always zero and is not stored.  The
flush writes just enough bytes for the decoder, which pads the stream with
exactly three zero bytes; a decoder that needs more than that has been fed
a truncated stream.  That check and the flush position check in
:func:`dec_status` catch most damaged streams; the container's explicit
lengths catch truncated files deterministically.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import InvalidArgument, MalformedBitstream

__all__ = [
    "RangeEncoder",
    "RangeDecoder",
    "rc_encode_symbol",
    "rc_decode_symbol",
    "MAX_TOTAL",
    "enc_init",
    "enc_put",
    "enc_finish",
    "dec_init",
    "dec_target",
    "dec_consume",
    "dec_status",
]

MAX_TOTAL = 1 << 16
TOP = 1 << 24
MASK32 = (1 << 32) - 1
PAD = 3

# encoder state slots
LOW, RANGE, CACHE, CSIZE, POS = 0, 1, 2, 3, 4
# decoder state slots
CODE, DRANGE, DPOS, ERR = 0, 1, 2, 3


@njit(cache=True)
def _shift_low(st, out):
    low = st[LOW]
    if low < 0xFF000000 or low > MASK32:
        carry = low >> 32
        temp = st[CACHE]
        while True:
            out[st[POS]] = (temp + carry) & 0xFF
            st[POS] += 1
            temp = 0xFF
            st[CSIZE] -= 1
            if st[CSIZE] == 0:
                break
        st[CACHE] = (low >> 24) & 0xFF
    st[CSIZE] += 1
    st[LOW] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def enc_init(st):
    st[LOW] = 0
    st[RANGE] = MASK32
    st[CACHE] = 0
    st[CSIZE] = 1
    st[POS] = 0


@njit(cache=True)
def enc_put(st, out, cum_lo, freq, total):
    r = st[RANGE] // total
    st[LOW] += r * cum_lo
    st[RANGE] = r * freq
    while st[RANGE] < TOP:
        st[RANGE] <<= 8
        _shift_low(st, out)


@njit(cache=True)
def enc_finish(st, out):
    """Round ``low`` up to a multiple of 2^24 and emit its top byte.

    Returns the number of bytes written, first (always zero) byte included.
    """
    st[LOW] = (st[LOW] + TOP - 1) & ~(TOP - 1)
    _shift_low(st, out)
    _shift_low(st, out)
    return st[POS]


@njit(cache=True)
def _next_byte(st, data):
    p = st[DPOS]
    st[DPOS] = p + 1
    if p < data.shape[0]:
        return np.int64(data[p])
    if p >= data.shape[0] + PAD:
        st[ERR] = 1
    return np.int64(0)


@njit(cache=True)
def dec_init(st, data):
    st[DPOS] = 0
    st[ERR] = 0
    st[DRANGE] = MASK32
    code = np.int64(0)
    for _ in range(4):
        code = (code << 8) | _next_byte(st, data)
    st[CODE] = code


@njit(cache=True)
def dec_target(st, total):
    """Scaled code value in [0, total); flags an error when it falls outside."""
    r = st[DRANGE] // total
    v = st[CODE] // r
    if v >= total:
        st[ERR] = 2
        v = total - 1
    return v


@njit(cache=True)
def dec_consume(st, data, cum_lo, freq, total):
    r = st[DRANGE] // total
    st[CODE] -= r * cum_lo
    st[DRANGE] = r * freq
    while st[DRANGE] < TOP:
        st[CODE] = ((st[CODE] << 8) | _next_byte(st, data)) & MASK32
        st[DRANGE] <<= 8


@njit(cache=True)
def dec_status(st, data):
    """0 when the stream was consumed exactly, otherwise an error code."""
    if st[ERR] != 0:
        return st[ERR]
    if st[DPOS] != data.shape[0] + PAD:
        return 3
    # the flush leaves the final value less than 2^24 above low
    if st[CODE] >= TOP:
        return 4
    return 0


def _check_interval(cum_lo: int, cum_hi: int, total: int) -> None:
    if not (0 < total <= MAX_TOTAL):
        raise InvalidArgument(f"total {total} outside (0, {MAX_TOTAL}]")
    if not (0 <= cum_lo < cum_hi <= total):
        raise InvalidArgument(f"bad interval [{cum_lo}, {cum_hi}) for total {total}")


class RangeEncoder:
    """Incremental encoder; call :meth:`finish` once to obtain the bytes."""

    def __init__(self, capacity: int = 1024):
        self.st = np.zeros(5, dtype=np.int64)
        self.out = np.zeros(capacity, dtype=np.uint8)
        self.finished = False
        enc_init(self.st)

    def _reserve(self):
        # one symbol emits at most two bytes; the flush at most the pending run plus two
        need = int(self.st[POS]) + int(self.st[CSIZE]) + 8
        if need > self.out.shape[0]:
            self.out = np.concatenate([self.out, np.zeros(max(need, self.out.shape[0]), dtype=np.uint8)])

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        _check_interval(cum_lo, cum_hi, total)
        if self.finished:
            raise InvalidArgument("encoder already finished")
        self._reserve()
        enc_put(self.st, self.out, cum_lo, cum_hi - cum_lo, total)

    def finish(self) -> bytes:
        self._reserve()
        n = enc_finish(self.st, self.out)
        self.finished = True
        return self.out[1:n].tobytes()


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = np.frombuffer(bytes(data), dtype=np.uint8)
        self.st = np.zeros(4, dtype=np.int64)
        dec_init(self.st, self.data)

    def target(self, total: int) -> int:
        if not (0 < total <= MAX_TOTAL):
            raise InvalidArgument(f"total {total} outside (0, {MAX_TOTAL}]")
        v = int(dec_target(self.st, total))
        if self.st[ERR]:
            raise MalformedBitstream("range decoder state left the coding interval")
        return v

    def consume(self, cum_lo: int, cum_hi: int, total: int) -> None:
        _check_interval(cum_lo, cum_hi, total)
        dec_consume(self.st, self.data, cum_lo, cum_hi - cum_lo, total)
        if self.st[ERR]:
            raise MalformedBitstream("range decoder read past the end of the stream")

    def decode(self, cdf) -> int:
        """Decode one symbol given a cumulative table ``cdf`` (length n+1, cdf[0]=0)."""
        total = int(cdf[-1])
        v = self.target(total)
        s = int(np.searchsorted(cdf, v, side="right")) - 1
        self.consume(int(cdf[s]), int(cdf[s + 1]), total)
        return s

    def finish(self) -> None:
        code = int(dec_status(self.st, self.data))
        if code:
            raise MalformedBitstream(f"range coder stream not consumed exactly (status {code})")


def rc_encode_symbol(state: RangeEncoder, cum_lo: int, cum_hi: int, total: int) -> None:
    state.encode(cum_lo, cum_hi, total)


def rc_decode_symbol(state: RangeDecoder, total: int) -> int:
    """Return the scaled target in [0, total); the caller maps it to a symbol
    and then calls ``state.consume`` with that symbol's interval."""
    return state.target(total)
