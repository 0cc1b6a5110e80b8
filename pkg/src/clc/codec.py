"""End-to-end conditional compression of one image against a dictionary."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .conditioning import (
    ConditioningLatent,
    MatchRecords,
    clm_align,
    clm_match,
    cls_weights,
    gain_to_code,
    pack_records,
    record_bits,
    synthesize_conditioning,
    unpack_records,
)
from .dictionary import Dictionary, retrieve
from .entropy.bitstream import Bitstream, Header, read_bitstream, write_bitstream
from .entropy.latent_coding import (
    SliceSchedule,
    decode_hyper,
    decode_latent,
    encode_hyper,
    encode_latent,
    estimate_rate,
    quantize_pass,
)
from .errors import DictionaryMismatch, InvalidArgument, MalformedBitstream
from .features import GRAY_WEIGHTS, MIN_PATCH, ImagePatch
from .kvcache import KvCache
from .metrics import psnr
from .transforms import HYPER_STEP, Latent, analysis, hyper_analysis, synthesis

__all__ = [
    "CodecConfig",
    "CompressResult",
    "compress",
    "decompress",
    "reference_latent",
    "conditioning_for",
    "DEFAULT_STEPS",
    "side_info_bits",
]

DEFAULT_STEPS = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class CodecConfig:
    refs: int = 3
    step: float = 1.0
    window: int = 2
    alpha_w0: float = 4.0  # alpha = sigmoid(w0 + w1 * score), see cls_weights
    alpha_w1: float = -8.0
    no_cond: bool = False
    no_align: bool = False
    slices: int = 8
    patch: int = 16
    tau: float = 0.1


@dataclass
class CompressResult:
    data: bytes
    recon: np.ndarray
    psnr: float
    bits: int
    side_bits: int  # match records plus reference ids
    estimated_bits: float
    pixels: int
    seconds: float
    entry_ids: list[int] = field(default_factory=list)
    alpha: np.ndarray | None = None

    @property
    def bpp(self) -> float:
        return self.bits / self.pixels

    @property
    def side_bpp(self) -> float:
        return self.side_bits / self.pixels

    @property
    def estimated_bpp(self) -> float:
        return self.estimated_bits / self.pixels


def _as_image(image) -> np.ndarray:
    a = np.asarray(image.data if isinstance(image, ImagePatch) else image)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3) or a.dtype != np.uint8:
        raise InvalidArgument(f"expected an 8-bit HxW or HxWx3 image, got {a.dtype} {a.shape}")
    return a


def _match_channels(pix: np.ndarray, channels: int) -> np.ndarray:
    if pix.shape[2] == channels:
        return pix
    if channels == 1:
        return np.clip(np.rint(pix.astype(np.float64) @ GRAY_WEIGHTS), 0, 255).astype(np.uint8)[:, :, None]
    return np.repeat(pix, 3, axis=2)


def _query_patch(img: np.ndarray) -> ImagePatch:
    """Retrieval query; slivers narrower than the filter bank are edge-padded.
    Only the encoder retrieves, so this never affects decoding."""
    ph, pw = max(MIN_PATCH - img.shape[0], 0), max(MIN_PATCH - img.shape[1], 0)
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return ImagePatch(img)


def reference_latent(d: Dictionary, entry_id: int, channels: int, p: int) -> Latent:
    """Analysis transform of a dictionary payload, memoised on the dictionary."""
    key = (entry_id, channels, p)
    lat = d._latents.get(key)
    if lat is None:
        pix = _match_channels(d.entries[entry_id].payload.data, channels)
        lat = analysis(pix, p)
        d._latents[key] = lat
    return lat


def conditioning_for(y: Latent, refs: list[Latent], cfg: CodecConfig):
    """Encoder-side matching, alignment and fusion weights -> (cond, records)."""
    _, rec = clm_match(y, refs, cfg.window, cfg.tau)
    if cfg.no_align:
        rec.gain_code[:] = gain_to_code(1.0)
    else:
        y_m = y.with_data(synthesize_conditioning(refs, _unit_gain(rec), y, cfg.window, with_alpha=False).data)
        _, rec = clm_align(y, y_m, rec, refs, cfg.window)
    cls_weights(rec, cfg.alpha_w0, cfg.alpha_w1)
    return synthesize_conditioning(refs, rec, y, cfg.window), rec


def _unit_gain(rec: MatchRecords) -> MatchRecords:
    r = rec.copy()
    r.gain_code[:] = gain_to_code(1.0)
    return r


def compress(
    image,
    d: Dictionary,
    cfg: CodecConfig = CodecConfig(),
    cache: KvCache | None = None,
    perturb=None,
) -> CompressResult:
    """Encode ``image``.  ``perturb`` optionally edits the records before
    fusion (used by robustness experiments); it receives and returns a
    :class:`MatchRecords` plus the reference list."""
    t0 = time.perf_counter()
    img = _as_image(image)
    h, w, ch = img.shape
    step = float(np.float32(cfg.step))  # the header stores f32
    if not step > 0:
        raise InvalidArgument("quantization step must be positive")
    if cfg.refs < 0 or cfg.refs > 255:
        raise InvalidArgument("reference count must lie in [0, 255]")
    schedule = SliceSchedule(cfg.slices)
    y = analysis(img, cfg.patch)
    ids: list[int] = []
    cond: ConditioningLatent | None = None
    records = b""
    if not cfg.no_cond and cfg.refs > 0:
        entries, _, _ = retrieve(d, None, cache, _query_patch(img), cfg.refs)
        ids = [e.id for e in entries]
        refs = [reference_latent(d, i, ch, cfg.patch) for i in ids]
        cond, rec = conditioning_for(y, refs, cfg)
        if perturb is not None:
            refs, rec = perturb(refs, rec)
            cond = synthesize_conditioning(refs, rec, y, cfg.window)
        records = pack_records(rec, len(ids), cfg.window)
    symbols, recon = quantize_pass(y, cond, schedule, step)
    mu = recon.data - symbols * step
    hyper = hyper_analysis(y.with_data(y.data - mu), schedule.k)
    enc = encode_latent(y, cond, hyper, schedule, step)
    header = Header(w, h, ch, cfg.patch, len(ids), schedule.k, step, cfg.window,
                    cfg.alpha_w0, cfg.alpha_w1, d.content_hash, ids)
    bs = Bitstream(header, records, encode_hyper(hyper), enc.payloads)
    data = write_bitstream(bs)
    sizes = bs.section_sizes()
    overhead = 8 * (sizes["header"] + 4 + len(records) + 4 + 4 * schedule.k)
    est = estimate_rate(y, cond, hyper, schedule, step, overhead)
    out = synthesis(enc.recon)
    if ch == 1:
        out_cmp = out[:, :, 0]
        src = img[:, :, 0]
    else:
        out_cmp, src = out, img
    return CompressResult(
        data=data,
        recon=out_cmp,
        psnr=psnr(src, out_cmp),
        bits=8 * len(data),
        side_bits=8 * len(records) + 32 * len(ids),
        estimated_bits=est,
        pixels=h * w,
        seconds=time.perf_counter() - t0,
        entry_ids=ids,
        alpha=None if cond is None else cond.alpha,
    )


def decompress(data: bytes, d: Dictionary) -> np.ndarray:
    """Decode a CLCB stream; grey images come back as (h, w)."""
    bs = read_bitstream(data)
    hd = bs.header
    if hd.dict_hash != d.content_hash:
        raise DictionaryMismatch("stream was encoded against a different dictionary")
    if hd.window > 3:
        raise MalformedBitstream("search window does not fit the record format")
    p = hd.p
    if (p * p) % hd.k:
        raise MalformedBitstream("slice count does not divide the block size")
    by, bx = -(-hd.height // p), -(-hd.width // p)
    like = Latent(np.zeros((hd.channels * p * p, by, bx)), p, hd.channels, hd.height, hd.width)
    schedule = SliceSchedule(hd.k)
    cond = None
    if hd.m > 0:
        if any(i >= len(d) for i in hd.entry_ids):
            raise MalformedBitstream("stream references a missing dictionary entry")
        refs = [reference_latent(d, i, hd.channels, p) for i in hd.entry_ids]
        rec = unpack_records(bs.records, by, bx, hd.m, hd.window)
        cond = synthesize_conditioning(refs, rec, like, hd.window)
    elif bs.records:
        raise MalformedBitstream("records present without references")
    hyper = decode_hyper(bs.hyper, (hd.channels, hd.k, by, bx), HYPER_STEP)
    y_hat = decode_latent(bs.slices, cond, hyper, schedule, float(hd.step), like)
    out = synthesis(y_hat)
    return out[:, :, 0] if hd.channels == 1 else out


def side_info_bits(m: int, window: int, by: int, bx: int) -> int:
    """Record-section bits for a block grid, row padding included."""
    per_block = sum(record_bits(m, window)[i] * (2 if i == 1 else 1) for i in range(4))
    return 8 * by * (-(-bx * per_block // 8)) + 32 * m

