"""Block matching against reference latents and conditional mean synthesis.

The encoder searches every reference for the best-matching block inside a
small window, refines the offset, fits a scalar gain, and picks a fusion
weight.  Everything the decoder needs is quantized into per-block records,
and :func:`synthesize_conditioning` rebuilds the conditioning latent from
those records alone, on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, MalformedBitstream
from .numerics import softmax_rows
from .transforms import Latent

__all__ = [
    "MatchRecord",
    "MatchRecords",
    "ConditioningLatent",
    "block_descriptors",
    "clm_similarity",
    "clm_match",
    "clm_align",
    "cls_weights",
    "alpha_from_code",
    "alpha_to_code",
    "gain_from_code",
    "gain_to_code",
    "cls_predict_mean",
    "synthesize_conditioning",
    "pack_records",
    "unpack_records",
    "record_bits",
    "TAU",
    "WINDOW",
]

TAU = 0.1
WINDOW = 2
GAIN_LEVELS = 64
GAIN_SCALE = 32.0  # decoded gain = code / 32, so codes span [0, 1.97]
ALPHA_LEVELS = 16


@dataclass(frozen=True)
class MatchRecord:
    bx: int
    by: int
    ref_index: int
    dx: int
    dy: int
    score: float
    gain_code: int
    alpha_code: int


@dataclass
class MatchRecords:
    """Per-block side information stored as (by, bx) integer grids."""

    ref: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    score: np.ndarray
    gain_code: np.ndarray
    alpha_code: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.ref.shape

    def __getitem__(self, pos) -> MatchRecord:
        by, bx = pos
        return MatchRecord(
            bx, by, int(self.ref[by, bx]), int(self.dx[by, bx]), int(self.dy[by, bx]),
            float(self.score[by, bx]), int(self.gain_code[by, bx]), int(self.alpha_code[by, bx]),
        )

    def __iter__(self):
        by, bx = self.shape
        for y in range(by):
            for x in range(bx):
                yield self[y, x]

    def copy(self) -> "MatchRecords":
        return MatchRecords(*(a.copy() for a in (self.ref, self.dx, self.dy, self.score, self.gain_code, self.alpha_code)))

    @classmethod
    def empty(cls, by: int, bx: int) -> "MatchRecords":
        z = np.zeros((by, bx), dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy(), np.zeros((by, bx)), z.copy(), z.copy())


@dataclass
class ConditioningLatent:
    data: np.ndarray  # y_a, same shape as the target latent
    alpha: np.ndarray  # (by, bx) fusion weights decoded from alpha codes
    records: MatchRecords | None


def block_descriptors(latent: Latent) -> np.ndarray:
    """(by, bx, planes*(p^2-1)) unit vectors of AC coefficients; flat blocks stay zero."""
    v = latent.plane_view()[:, 1:]  # drop DC of every plane
    desc = v.reshape(-1, latent.blocks_y, latent.blocks_x).transpose(1, 2, 0)
    norm = np.linalg.norm(desc, axis=2, keepdims=True)
    return np.where(norm > 1e-9, desc / np.where(norm > 1e-9, norm, 1.0), 0.0)


def clm_similarity(y_blocks, yr_blocks, tau: float = TAU) -> np.ndarray:
    """Row-softmax of descriptor inner products at temperature ``tau``."""
    yr = np.asarray(yr_blocks, dtype=np.float64)
    if yr.ndim != 2 or yr.shape[0] == 0:
        raise InvalidArgument("reference block set is empty")
    return softmax_rows(np.asarray(y_blocks, dtype=np.float64) @ yr.T, tau)


def _offsets(w: int) -> list[tuple[int, int]]:
    """Window offsets (dy, dx) in tie-break order: nearest first, then dy, then dx."""
    offs = [(dy, dx) for dy in range(-w, w + 1) for dx in range(-w, w + 1)]
    return sorted(offs, key=lambda o: (o[0] ** 2 + o[1] ** 2, o[0], o[1]))


def _ref_rows(ref: Latent, by: int, bx: int, dy: int, dx: int):
    """Reference grid indices for every target block shifted by (dy, dx), wrapping."""
    ys = (np.arange(by) + dy) % ref.blocks_y
    xs = (np.arange(bx) + dx) % ref.blocks_x
    return ys, xs


def _check_refs(y: Latent, refs) -> None:
    if len(refs) == 0:
        raise InvalidArgument("at least one reference latent is required")
    for r in refs:
        if r.channels != y.channels or r.p != y.p:
            raise InvalidArgument("reference latent layout differs from the target")


def clm_match(y: Latent, refs: list[Latent], w: int = WINDOW, tau: float = TAU):
    """Best reference block per target block within a (2w+1)^2 window.

    Every candidate of every reference enters one softmax row.  Ties go to
    the smaller reference index, then the smaller displacement, then the
    smaller (dy, dx).

    Returns ``(y_m, records)`` where ``y_m`` copies the chosen blocks and the
    records carry reference index, offset and score.
    """
    _check_refs(y, refs)
    if w < 0:
        raise InvalidArgument("window must be non-negative")
    by, bx = y.blocks_y, y.blocks_x
    dt = block_descriptors(y)
    offs = _offsets(w)
    cands = []  # candidate order = tie-break order
    logits = []
    for r_idx, ref in enumerate(refs):
        dr = block_descriptors(ref)
        for dy, dx in offs:
            ys, xs = _ref_rows(ref, by, bx, dy, dx)
            logits.append(np.einsum("yxd,yxd->yx", dt, dr[ys][:, xs]))
            cands.append((r_idx, dy, dx))
    logits = np.stack(logits, axis=-1)  # (by, bx, C)
    prob = softmax_rows(logits.reshape(by * bx, -1), tau).reshape(by, bx, -1)
    best = np.argmax(prob, axis=-1)  # first maximum = tie-break order
    table = np.array(cands)
    rec = MatchRecords.empty(by, bx)
    rec.ref[:] = table[best, 0]
    rec.dy[:] = table[best, 1]
    rec.dx[:] = table[best, 2]
    rec.score[:] = np.take_along_axis(prob, best[..., None], axis=-1)[..., 0]
    y_m = _gather(refs, rec, by, bx, y.data.shape)
    return y.with_data(y_m), rec


def _gather(refs, rec: MatchRecords, by: int, bx: int, shape) -> np.ndarray:
    out = np.zeros(shape)
    gy, gx = np.mgrid[0:by, 0:bx]
    for r_idx, ref in enumerate(refs):
        sel = rec.ref == r_idx
        if not sel.any():
            continue
        ry = (gy[sel] + rec.dy[sel]) % ref.blocks_y
        rx = (gx[sel] + rec.dx[sel]) % ref.blocks_x
        out[:, gy[sel], gx[sel]] = ref.data[:, ry, rx]
    return out


def gain_to_code(g) -> np.ndarray:
    return np.clip(np.rint(np.asarray(g) * GAIN_SCALE), 0, GAIN_LEVELS - 1).astype(np.int64)


def gain_from_code(code) -> np.ndarray:
    return np.asarray(code, dtype=np.float64) / GAIN_SCALE


def _ls_gain(target, cand) -> np.ndarray:
    num = np.sum(target * cand, axis=0)
    den = np.sum(cand * cand, axis=0)
    g = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(g, 0.0, 2.0)


def _gained_residual(target, cand) -> np.ndarray:
    g = _ls_gain(target, cand)
    return np.sum((target - g[None] * cand) ** 2, axis=0)


def clm_align(y: Latent, y_m: Latent, records: MatchRecords, refs: list[Latent], w: int = WINDOW):
    """Refine offsets by +-1 block and fit a quantized per-block gain.

    The refinement keeps the reference and minimises the residual energy
    left after the best clipped gain; offsets stay inside the window.  The
    gain is the least-squares scale clipped to [0, 2] and quantized to 6 bits.
    Returns ``(conditioning, records)``; alpha codes are left untouched.
    """
    _check_refs(y, refs)
    by, bx = y.blocks_y, y.blocks_x
    if records.shape != (by, bx):
        raise InvalidArgument("records do not cover every block")
    rec = records.copy()
    target = y.data
    best_e = _gained_residual(target, y_m.data)
    best_dy, best_dx = rec.dy.copy(), rec.dx.copy()
    for ddy, ddx in _offsets(1):
        if ddy == 0 and ddx == 0:
            continue
        ndy, ndx = rec.dy + ddy, rec.dx + ddx
        ok = (np.abs(ndy) <= w) & (np.abs(ndx) <= w)
        trial = rec.copy()
        trial.dy[:] = np.where(ok, ndy, rec.dy)
        trial.dx[:] = np.where(ok, ndx, rec.dx)
        cand = _gather(refs, trial, by, bx, target.shape)
        e = _gained_residual(target, cand)
        better = ok & (e < best_e)
        best_e = np.where(better, e, best_e)
        best_dy = np.where(better, trial.dy, best_dy)
        best_dx = np.where(better, trial.dx, best_dx)
    rec.dy[:] = best_dy
    rec.dx[:] = best_dx
    cand = _gather(refs, rec, by, bx, target.shape)
    rec.gain_code[:] = gain_to_code(_ls_gain(target, cand))
    return synthesize_conditioning(refs, rec, y, w, with_alpha=False), rec


def alpha_from_code(code) -> np.ndarray:
    """Sixteen levels (8c+1)/130: all inside (0, 1), code 8 is exactly 0.5."""
    return (8.0 * np.asarray(code, dtype=np.float64) + 1.0) / 130.0


def alpha_to_code(alpha) -> np.ndarray:
    return np.clip(np.rint((130.0 * np.asarray(alpha, dtype=np.float64) - 1.0) / 8.0), 0, ALPHA_LEVELS - 1).astype(np.int64)


def cls_weights(records: MatchRecords, w0: float = 0.0, w1: float = 0.0) -> np.ndarray:
    """alpha = sigmoid(w0 + w1 * score), written into ``records.alpha_code``.

    Returns the decoded per-block alpha, which is what the decoder will see.
    """
    s = np.asarray(records.score, dtype=np.float64)
    if np.any((s < 0) | (s > 1)):
        raise InvalidArgument("match scores must lie in [0, 1]")
    alpha = 1.0 / (1.0 + np.exp(-(w0 + w1 * s)))
    records.alpha_code[:] = alpha_to_code(alpha)
    return alpha_from_code(records.alpha_code)


def cls_predict_mean(context_pred, y_a, alpha) -> np.ndarray:
    """mu = alpha * context + (1 - alpha) * y_a, alpha given per block."""
    c = np.asarray(getattr(context_pred, "data", context_pred), dtype=np.float64)
    a = np.asarray(getattr(y_a, "data", y_a), dtype=np.float64)
    if c.shape != a.shape:
        raise InvalidArgument(f"shape mismatch {c.shape} vs {a.shape}")
    al = np.asarray(alpha, dtype=np.float64)
    if al.ndim == 2 and c.ndim == 3:
        al = al[None]
    return al * c + (1.0 - al) * a


def _validate(refs, rec: MatchRecords, shape, w: int) -> None:
    by, bx = shape
    if rec.shape != (by, bx):
        raise MalformedBitstream(f"record grid {rec.shape} does not match latent grid {(by, bx)}")
    if np.any(rec.ref < 0) or np.any(rec.ref >= len(refs)):
        raise MalformedBitstream("record references a missing reference")
    if np.any(np.abs(rec.dx) > w) or np.any(np.abs(rec.dy) > w):
        raise MalformedBitstream("record offset outside the search window")
    if np.any(rec.gain_code < 0) or np.any(rec.gain_code >= GAIN_LEVELS):
        raise MalformedBitstream("gain code out of range")
    if np.any(rec.alpha_code < 0) or np.any(rec.alpha_code >= ALPHA_LEVELS):
        raise MalformedBitstream("alpha code out of range")


def synthesize_conditioning(refs, records: MatchRecords, like: Latent, w: int = WINDOW, with_alpha: bool = True) -> ConditioningLatent:
    """Rebuild y_a and alpha from reference latents and transmitted records.

    Used verbatim by encoder and decoder, so both sides agree bit for bit.
    """
    by, bx = like.blocks_y, like.blocks_x
    _validate(refs, records, (by, bx), w)
    for r in refs:
        if r.channels != like.channels:
            raise MalformedBitstream("reference latent layout differs from the target")
    blocks = _gather(refs, records, by, bx, like.data.shape)
    y_a = blocks * gain_from_code(records.gain_code)[None]
    alpha = alpha_from_code(records.alpha_code) if with_alpha else np.ones((by, bx))
    return ConditioningLatent(y_a, alpha, records)


def record_bits(m: int, w: int) -> tuple[int, int, int, int]:
    """Field widths (ref, offset, gain, alpha) for ``m`` references and window ``w``."""
    if w > 3:
        raise InvalidArgument("offsets are stored in 3 bits, so the window is at most 3")
    ref_bits = 2 if m <= 4 else 3
    return ref_bits, 3, 6, 4


def _bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def pack_records(rec: MatchRecords, m: int, w: int) -> bytes:
    """MSB-first fields per block, each row of blocks padded to a byte."""
    rb, ob, gb, ab = record_bits(m, w)
    fields = np.concatenate(
        [
            _bits(rec.ref, rb),
            _bits(rec.dx + w, ob),
            _bits(rec.dy + w, ob),
            _bits(rec.gain_code, gb),
            _bits(rec.alpha_code, ab),
        ],
        axis=-1,
    )  # (by, bx, bits)
    by, bx, nb = fields.shape
    return b"".join(np.packbits(fields[y].reshape(-1)).tobytes() for y in range(by))


def unpack_records(data: bytes, by: int, bx: int, m: int, w: int) -> MatchRecords:
    rb, ob, gb, ab = record_bits(m, w)
    per_block = rb + 2 * ob + gb + ab
    row_bytes = -(-bx * per_block // 8)
    if len(data) != row_bytes * by:
        raise MalformedBitstream(f"record section is {len(data)} bytes, expected {row_bytes * by}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8).reshape(by, row_bytes), axis=1)
    bits = bits[:, : bx * per_block].reshape(by, bx, per_block).astype(np.int64)

    def take(start, width):
        weights = 1 << np.arange(width - 1, -1, -1)
        return np.sum(bits[..., start:start + width] * weights, axis=-1)

    rec = MatchRecords.empty(by, bx)
    pos = 0
    rec.ref[:] = take(pos, rb)
    pos += rb
    rec.dx[:] = take(pos, ob) - w
    pos += ob
    rec.dy[:] = take(pos, ob) - w
    pos += ob
    rec.gain_code[:] = take(pos, gb)
    pos += gb
    rec.alpha_code[:] = take(pos, ab)
    return rec
