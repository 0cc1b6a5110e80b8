"""RD sweeps and the ablation harness (reference count, dictionary size, component toggles)."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .codec import CodecConfig, compress
from .dictionary import DictConfig, Dictionary, build_dictionary
from .errors import InvalidArgument
from .kvcache import KvCache
from .metrics import bd_rate

__all__ = [
    "BENCH_SCHEMA",
    "BENCH_COLUMNS",
    "RdResult",
    "shifted_crops",
    "correlated_set",
    "rd_sweep",
    "bench",
]

BENCH_SCHEMA = "clc-bench/1"
BENCH_COLUMNS = [
    "sweep", "label", "clusters", "refs", "step", "bpp", "side_bpp", "est_bpp",
    "psnr", "enc_seconds", "bd_rate_vs_nocond",
]


@dataclass
class RdResult:
    label: str
    steps: tuple
    bpp: np.ndarray  # aggregate bits / aggregate pixels, per step
    side_bpp: np.ndarray
    est_bpp: np.ndarray
    psnr: np.ndarray  # mean PSNR per step
    seconds: np.ndarray  # mean encode time per image, per step
    streams: list  # [step][image] bytes

    def curve(self):
        return self.bpp, self.psnr


def shifted_crops(images, size: int, count: int | None = None, seed: int = 0, shift: int = 32, noise: int = 3):
    """Noisy ``size`` crops taken ``shift`` pixels down and right of each
    image's top-left tile.

    With the tiles of the same images in the dictionary, each crop's source
    is in the dictionary while its border comes from the neighbouring tiles.
    """
    rng = np.random.default_rng(seed)
    usable = [im for im in images if im.shape[0] >= size + shift and im.shape[1] >= size + shift]
    if not usable:
        raise InvalidArgument(f"no image is at least {size + shift} pixels on a side")
    order = rng.permutation(len(usable))[: count or len(usable)]
    out = []
    for i in sorted(order.tolist()):
        src = usable[i][shift:shift + size, shift:shift + size].astype(np.int16)
        img = np.clip(src + rng.integers(-noise, noise + 1, size=src.shape), 0, 255).astype(np.uint8)
        out.append(img)
    return out


def correlated_set(seed: int, count: int, size: int = 256, shift: int = 32, noise: int = 3):
    """(dictionary patches, test inputs) from ``count`` procedural images of
    twice the patch size, tiled into four patches each."""
    from .synthetic import corpus, crop_patches

    big = corpus(seed, count, 2 * size, 2 * size)
    patches = [p for b in big for p in crop_patches(b, size)]
    return patches, shifted_crops(big, size, count, seed + 1, shift, noise)


def rd_sweep(images, d: Dictionary, cfg: CodecConfig, steps, label: str = "", use_cache: bool = True) -> RdResult:
    """Compress every image at every step; rates are pooled over the set."""
    if not images:
        raise InvalidArgument("no images to sweep")
    cache = KvCache() if use_cache else None
    bpp, side, est, q, secs, streams = [], [], [], [], [], []
    for st in steps:
        c = replace(cfg, step=float(st))
        bits = sbits = ebits = pix = 0
        ps, ts, row = [], [], []
        for img in images:
            r = compress(img, d, c, cache=cache)
            bits += r.bits
            sbits += r.side_bits
            ebits += r.estimated_bits
            pix += r.pixels
            ps.append(r.psnr)
            ts.append(r.seconds)
            row.append(r.data)
        bpp.append(bits / pix)
        side.append(sbits / pix)
        est.append(ebits / pix)
        q.append(float(np.mean(ps)))
        secs.append(float(np.mean(ts)))
        streams.append(row)
    return RdResult(label, tuple(steps), np.array(bpp), np.array(side), np.array(est),
                    np.array(q), np.array(secs), streams)


def _safe_bd(test: RdResult, anchor: RdResult) -> float:
    try:
        return bd_rate(test.curve(), anchor.curve())
    except InvalidArgument:
        return float("nan")


def _rows(sweep: str, res: RdResult, clusters: int, refs: int, anchor: RdResult | None):
    bd = _safe_bd(res, anchor) if anchor is not None else float("nan")
    for i, st in enumerate(res.steps):
        yield {
            "sweep": sweep, "label": res.label, "clusters": clusters, "refs": refs, "step": st,
            "bpp": res.bpp[i], "side_bpp": res.side_bpp[i], "est_bpp": res.est_bpp[i],
            "psnr": res.psnr[i], "enc_seconds": res.seconds[i], "bd_rate_vs_nocond": bd,
        }


def bench(
    images,
    patch: int = 256,
    inputs=None,
    refs_sweep=(1, 2, 3, 4, 5),
    cluster_sweep=(16,),
    steps=(0.5, 1.0, 2.0, 4.0),
    base: CodecConfig = CodecConfig(),
    dict_config: DictConfig = DictConfig(clusters=16, pca_dim=32, batch=256, iters=50),
    seed: int = 0,
    log=None,
):
    """Full ablation.  Returns ``(rows, curves, summary)``.

    The tiles of ``images`` train the dictionaries; a cluster count of 0
    keeps every tile.  Without ``inputs`` the test set is
    :func:`shifted_crops` of the same images.
    """
    from .synthetic import crop_patches

    if not images:
        raise InvalidArgument("empty corpus")
    patches = [p for im in images for p in crop_patches(im, patch)]
    if not patches:
        raise InvalidArgument(f"no image holds a {patch}px tile")
    test = list(inputs) if inputs is not None else shifted_crops(images, patch, None, seed + 1)
    log = log or (lambda *_: None)
    rows, curves = [], {}
    summary: dict = {"refs": {}, "clusters": {}, "toggles": {}, "cache_bytes_identical": True}
    first = int(cluster_sweep[0]) or len(patches)
    for k in cluster_sweep:
        k = int(k) or len(patches)
        t0 = time.perf_counter()
        d = build_dictionary(patches, replace(dict_config, clusters=k, seed=seed))
        build_s = time.perf_counter() - t0
        anchor = rd_sweep(test, d, replace(base, no_cond=True), steps, "no-cond")
        full = rd_sweep(test, d, base, steps, f"K={k}")
        rows += _rows("clusters", anchor, k, 0, anchor)
        rows += _rows("clusters", full, k, base.refs, anchor)
        summary["clusters"][k] = {
            "bd_rate": _safe_bd(full, anchor),
            "enc_seconds": float(full.seconds.mean()),
            "build_seconds": build_s,
        }
        log(f"clusters={k}: bd-rate {summary['clusters'][k]['bd_rate']:.2f}%")
        if k != first:
            continue
        curves["no-cond"] = anchor.curve()
        for m in refs_sweep:
            res = full if m == base.refs else rd_sweep(test, d, replace(base, refs=int(m)), steps, f"M={m}")
            res.label = f"M={m}"
            rows += _rows("refs", res, k, int(m), anchor)
            curves[f"M={m}"] = res.curve()
            summary["refs"][int(m)] = {"bd_rate": _safe_bd(res, anchor), "mean_bpp": float(res.bpp.mean())}
            log(f"M={m}: bd-rate {summary['refs'][int(m)]['bd_rate']:.2f}%")
        toggles = {
            "full": full,
            "no-align": rd_sweep(test, d, replace(base, no_align=True), steps, "no-align"),
            "no-cache": rd_sweep(test, d, base, steps, "no-cache", use_cache=False),
        }
        for name, res in toggles.items():
            res.label = name
            rows += _rows("toggles", res, k, base.refs, anchor)
            summary["toggles"][name] = {"bd_rate": _safe_bd(res, anchor), "enc_seconds": float(res.seconds.mean())}
        summary["cache_bytes_identical"] = toggles["no-cache"].streams == full.streams
        curves["no-align"] = toggles["no-align"].curve()
    return rows, curves, summary
