"""clc command-line interface.

Exit codes: 0 ok, 2 usage or data error, 3 dictionary mismatch, 4 malformed stream.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .codec import CodecConfig, compress, decompress
from .dictionary import DictConfig, build_dictionary, dict_load, dict_save
from .errors import ClcError, DictionaryFormatError, DictionaryMismatch, MalformedBitstream
from .imageio import image_read, image_write
from .metrics import psnr
from .synthetic import crop_patches

EXIT_OK, EXIT_DATA, EXIT_DICT, EXIT_STREAM = 0, 2, 3, 4
THEORY_SCHEMA = "clc-theory/1"
EVAL_SCHEMA = "clc-eval/1"
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


def default_seed() -> int:
    raw = os.environ.get("CLC_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"CLC_SEED must be an integer, got {raw!r}") from None


def _images_in(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise CliError(f"{folder} is not a directory")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _corpus_patches(folder, size: int):
    paths = _images_in(folder)
    if not paths:
        raise CliError(f"no PPM/PGM images in {folder}")
    patches, tags = [], []
    for p in paths:
        for i, c in enumerate(crop_patches(image_read(p), size)):
            patches.append(c)
            tags.append(f"{p.name}#{i}")
    return patches, tags


def _load_dict(path):
    try:
        return dict_load(path)
    except FileNotFoundError:
        raise CliError(f"dictionary {path} not found") from None
    except DictionaryFormatError as exc:
        raise CliError(f"cannot load dictionary {path}: {exc}") from None


def _write_csv(path, columns, rows, schema: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        wr = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: _fmt(r.get(k)) for k in columns})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def _write_json(path, obj, schema: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps({"schema": schema, **_jsonable(obj)}, indent=2, sort_keys=True) + "\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _codec_config(args) -> CodecConfig:
    return CodecConfig(
        refs=args.refs, step=args.step, window=args.window, alpha_w0=args.alpha_w0,
        alpha_w1=args.alpha_w1, no_cond=args.no_cond, no_align=getattr(args, "no_align", False),
    )


def cmd_build_dict(args) -> int:
    patches, tags = _corpus_patches(args.corpus, args.patch)
    if len(patches) < args.clusters:
        raise CliError(f"corpus yields {len(patches)} patches of {args.patch}px, need at least {args.clusters}")
    cfg = DictConfig(clusters=args.clusters, pca_dim=args.pca_dim, batch=args.batch, iters=args.iters, seed=args.seed)
    t0 = time.perf_counter()
    d = build_dictionary(patches, cfg, tags)
    digest = dict_save(d, args.out)
    print(f"entries {len(d)}  feature_dim {d.feature_dim}  patches {len(patches)}  "
          f"time {time.perf_counter() - t0:.2f}s")
    print(f"hash {digest.hex()}")
    return EXIT_OK


def cmd_compress(args) -> int:
    d = _load_dict(args.dict)
    img = image_read(args.input)
    res = compress(img, d, _codec_config(args))
    Path(args.out).write_bytes(res.data)
    print(f"bpp {res.bpp:.4f}  side_bpp {res.side_bpp:.4f}  est_bpp {res.estimated_bpp:.4f}  "
          f"psnr {res.psnr:.3f}  time {res.seconds:.3f}s")
    if res.entry_ids:
        print(f"refs {' '.join(str(i) for i in res.entry_ids)}")
    return EXIT_OK


def cmd_decompress(args) -> int:
    d = _load_dict(args.dict)
    data = Path(args.input).read_bytes()
    t0 = time.perf_counter()
    img = decompress(data, d)
    image_write(args.out, img)
    print(f"{img.shape[1]}x{img.shape[0]}  bpp {8 * len(data) / (img.shape[0] * img.shape[1]):.4f}  "
          f"time {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def _pairs(items) -> list[tuple[str, str]]:
    out = []
    for it in items:
        if ":" not in it:
            raise CliError(f"expected ORIGINAL:STREAM, got {it!r}")
        a, b = it.split(":", 1)
        out.append((a, b))
    return out


def cmd_eval(args) -> int:
    pairs = _pairs(args.pairs)
    if args.list:
        lines = Path(args.list).read_text().split()
        pairs += _pairs(lines)
    if not pairs:
        raise CliError("nothing to evaluate")
    d = _load_dict(args.dict)
    rows = []
    print(f"{'image':<28} {'bpp':>8} {'psnr':>8}")
    for orig, stream in pairs:
        src = image_read(orig)
        data = Path(stream).read_bytes()
        rec = decompress(data, d)
        pix = src.shape[0] * src.shape[1]
        row = {"image": Path(orig).name, "bpp": 8 * len(data) / pix, "psnr": psnr(src, rec), "bytes": len(data)}
        rows.append(row)
        print(f"{row['image']:<28} {row['bpp']:8.4f} {row['psnr']:8.3f}")
    bpp = np.array([r["bpp"] for r in rows])
    q = np.array([r["psnr"] for r in rows])
    finite = q[np.isfinite(q)]
    agg = {"images": len(rows), "mean_bpp": float(bpp.mean()),
           "mean_psnr": float(finite.mean()) if finite.size else math.inf}
    print(f"{'mean':<28} {agg['mean_bpp']:8.4f} {agg['mean_psnr']:8.3f}")
    if args.out:
        from .plotting import plot_eval

        out = Path(args.out)
        _write_csv(out / "eval.csv", ["image", "bpp", "psnr", "bytes"], rows, EVAL_SCHEMA)
        _write_json(out / "eval.json", {"aggregate": agg, "images": rows}, EVAL_SCHEMA)
        plot_eval([r["image"] for r in rows], bpp, q, out / "eval.png")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BENCH_COLUMNS, BENCH_SCHEMA, bench
    from .plotting import plot_rd_curves

    paths = _images_in(args.corpus)
    if not paths:
        raise CliError(f"no PPM/PGM images in {args.corpus}")
    images = [image_read(p) for p in paths]
    tiles = sum((im.shape[0] // args.patch) * (im.shape[1] // args.patch) for im in images)
    inputs = None
    if args.inputs:
        paths = _images_in(args.inputs)
        if not paths:
            raise CliError(f"no PPM/PGM images in {args.inputs}")
        inputs = [image_read(p) for p in paths]
    clusters = _ints(args.clusters)
    if tiles == 0 or max(clusters) > tiles:
        raise CliError(f"corpus yields {tiles} patches, fewer than {max(max(clusters), 1)} clusters")
    base = CodecConfig(window=args.window, alpha_w0=args.alpha_w0, alpha_w1=args.alpha_w1)
    dcfg = DictConfig(pca_dim=args.pca_dim, batch=args.batch, iters=args.iters)
    rows, curves, summary = bench(
        images, args.patch, inputs, _ints(args.refs_sweep), clusters, _floats(args.steps), base, dcfg, args.seed,
        log=lambda m: print(m, file=sys.stderr),
    )
    out = Path(args.out)
    _write_csv(out / "bench.csv", BENCH_COLUMNS, rows, BENCH_SCHEMA)
    _write_json(out / "bench.json", summary, BENCH_SCHEMA)
    plot_rd_curves(curves, out / "rd_curves.png", "reference-count sweep")
    print(f"wrote {out / 'bench.csv'}, {out / 'bench.json'}, {out / 'rd_curves.png'}")
    for m, s in summary["refs"].items():
        print(f"M={m}  bd_rate_vs_nocond {s['bd_rate']:+.2f}%  mean_bpp {s['mean_bpp']:.4f}")
    for k, s in summary["clusters"].items():
        print(f"K={k}  bd_rate_vs_nocond {s['bd_rate']:+.2f}%  enc {s['enc_seconds']:.3f}s")
    print(f"cache changes bytes: {'no' if summary['cache_bytes_identical'] else 'YES'}")
    return EXIT_OK


DEFAULT_SWEEP = {
    "d": 64, "r": 4, "sigma": 0.3, "sigma_ref": 0.3, "lambda_s": 4.0,
    "ns": [100, 400, 1600], "rhos": [0.0, 0.5, 0.9], "trials": 200, "delta": 0.05,
    "target": "innovation",
    "pr": {"eps": [0.0, 0.1, 0.3, 0.5], "steps": [1.0, 2.0, 4.0, 8.0], "images": 4, "size": 128},
}


def _sweep_spec(text: str | None) -> dict:
    spec = json.loads(json.dumps(DEFAULT_SWEEP))
    if not text:
        return spec
    p = Path(text)
    try:
        user = json.loads(p.read_text() if p.exists() else text)
    except json.JSONDecodeError as exc:
        raise CliError(f"sweep spec is neither a file nor valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise CliError("sweep spec must be a JSON object")
    unknown = set(user) - set(spec)
    if unknown:
        raise CliError(f"unknown sweep spec keys: {sorted(unknown)}")
    pr = user.pop("pr", None)
    spec.update(user)
    if pr is None:
        pass
    elif pr is False:
        spec["pr"] = None
    else:
        spec["pr"].update(pr)
    return spec


def _robustness(spec: dict, seed: int):
    from .bench import correlated_set
    from .theory import robustness_pr

    pr_spec = spec["pr"]
    patches, imgs = correlated_set(seed, pr_spec["images"], pr_spec["size"])
    d = build_dictionary(patches, DictConfig(clusters=len(patches), pca_dim=16, batch=64, iters=30, seed=seed))
    return robustness_pr(imgs, d, tuple(pr_spec["eps"]), tuple(pr_spec["steps"]), seed)


def cmd_verify_theory(args) -> int:
    from .plotting import plot_bound_sweep, plot_pr
    from .theory import SpikedModelParams, verify_bound

    spec = _sweep_spec(args.sweep_spec)
    base = SpikedModelParams(d=spec["d"], r=spec["r"], lambda_s=spec["lambda_s"],
                             sigma=spec["sigma"], sigma_ref=spec["sigma_ref"])
    t0 = time.perf_counter()
    rep = verify_bound(spec["ns"], spec["rhos"], spec["trials"], spec["delta"], base, args.seed, spec["target"])
    out = Path(args.out)
    rows = []
    for c in rep.configs:
        if c.skipped:
            continue
        bound = rep.c_fit * c.bound_unit
        for t, e in enumerate(c.errors):
            rows.append({"d": c.params.d, "r": c.params.r, "n": c.params.n, "rho": c.params.rho,
                         "sigma": c.params.sigma, "trial": t, "sin_theta": e, "bound": bound,
                         "violated": bool(e > bound)})
    _write_csv(out / "theory.csv", ["d", "r", "n", "rho", "sigma", "trial", "sin_theta", "bound", "violated"],
               rows, THEORY_SCHEMA)
    live = [c for c in rep.configs if not c.skipped]
    summary = {
        "seed": args.seed,
        "spec": spec,
        "c_fit": rep.c_fit,
        "delta": rep.delta,
        "violation_rate": rep.violation_rate,
        "holdout_violation_rate": rep.holdout_violation_rate,
        "decay_ratio_nmax_over_nmin": {str(k): v for k, v in rep.decay_ratios.items()},
        "monotone_in_n": rep.monotone_n,
        "monotone_in_rho": rep.monotone_rho,
        "configs": [
            {"n": c.params.n, "rho": c.params.rho, "median": c.median,
             "q05": float(np.quantile(c.errors, 0.05)), "q95": float(np.quantile(c.errors, 0.95)),
             "bound": rep.c_fit * c.bound_unit, "violation_rate": v}
            for c, v in zip(live, rep.per_config_violation)
        ],
        "skipped": [{"n": c.params.n, "rho": c.params.rho, "reason": c.reason} for c in rep.skipped],
    }
    ok = rep.passed()
    if live:
        plot_bound_sweep(rep, out / "theory_bound.png")
    for c in rep.skipped:
        print(f"skipped n={c.params.n} rho={c.params.rho}: {c.reason}")
    print(f"C = {rep.c_fit:.4g}  violations {100 * rep.violation_rate:.2f}% (delta {100 * rep.delta:g}%)  "
          f"monotone n: {rep.monotone_n}  monotone rho: {rep.monotone_rho}")
    for rho, ratio in rep.decay_ratios.items():
        print(f"rho={rho:g}: median(n_max)/median(n_min) = {ratio:.3f}")
    if spec["pr"]:
        pr, gains = _robustness(spec, args.seed)
        eps = sorted(pr)
        mono = all(pr[b] >= pr[a] for a, b in zip(eps, eps[1:]))
        summary["robustness"] = {"pr": {str(e): pr[e] for e in eps},
                                 "gain_db": {str(e): gains[e] for e in eps}, "monotone": mono}
        plot_pr(pr, out / "robustness_pr.png")
        print("PR " + "  ".join(f"eps={e:g}: {100 * pr[e]:.1f}%" for e in eps) + f"  monotone: {mono}")
        ok = ok and mono
    summary["passed"] = ok
    summary["seconds"] = time.perf_counter() - t0
    _write_json(out / "theory.json", summary, THEORY_SCHEMA)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_DATA


def cmd_synth_corpus(args) -> int:
    from .synthetic import natural_image

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        img = natural_image(rng, args.size, args.size, 1 if args.gray else 3)
        image_write(out / f"img{i:03d}.{'pgm' if args.gray else 'ppm'}", img[:, :, 0] if args.gray else img)
    print(f"wrote {args.count} images to {out}")
    return EXIT_OK


def _codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--refs", "-M", type=int, default=3, help="reference images per input (default 3)")
    p.add_argument("--step", type=float, default=1.0, help="quantization step")
    p.add_argument("--window", type=int, default=2, help="block-matching search radius in blocks")
    p.add_argument("--alpha-w0", type=float, default=CodecConfig.alpha_w0)
    p.add_argument("--alpha-w1", type=float, default=CodecConfig.alpha_w1)
    p.add_argument("--no-cond", action="store_true", help="code without references (alpha = 1)")
    p.add_argument("--no-align", action="store_true", help="skip offset refinement and gain fitting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clc", description="Conditional latent image coding with a reference dictionary")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = default_seed()

    p = sub.add_parser("build-dict", help="cluster a corpus into a reference dictionary")
    p.add_argument("corpus", help="directory of PPM/PGM images")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--clusters", type=int, default=256)
    p.add_argument("--pca-dim", type=int, default=64)
    p.add_argument("--patch", type=int, default=256, help="crop size in pixels")
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("compress", help="encode one image")
    p.add_argument("input")
    p.add_argument("--dict", "-d", required=True)
    p.add_argument("--out", "-o", required=True)
    _codec_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode one stream")
    p.add_argument("input")
    p.add_argument("--dict", "-d", required=True)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("eval", help="rate and PSNR of ORIGINAL:STREAM pairs")
    p.add_argument("pairs", nargs="*")
    p.add_argument("--list", help="file with one ORIGINAL:STREAM pair per line")
    p.add_argument("--dict", "-d", required=True)
    p.add_argument("--out", "-o", help="directory for eval.csv, eval.json and eval.png")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="reference-count, dictionary-size and toggle ablations")
    p.add_argument("corpus")
    p.add_argument("--inputs", help="test images; default is noisy copies of dictionary entries")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--patch", type=int, default=256)
    p.add_argument("--clusters", default="0", help="comma-separated cluster counts; 0 keeps every patch")
    p.add_argument("--refs-sweep", default="1,2,3,4,5")
    p.add_argument("--steps", default="0.5,1,2,4")
    p.add_argument("--pca-dim", type=int, default=32)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--alpha-w0", type=float, default=CodecConfig.alpha_w0)
    p.add_argument("--alpha-w1", type=float, default=CodecConfig.alpha_w1)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify-theory", help="Monte-Carlo check of the subspace bound and robustness PR")
    p.add_argument("--sweep-spec", help="JSON object or file overriding the default sweep; \"pr\": false skips PR")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("synth-corpus", help="write seeded procedural test images")
    p.add_argument("out")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--gray", action="store_true")
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"clc: {exc}", file=sys.stderr)
        return exc.code
    except DictionaryMismatch as exc:
        print(f"clc: {exc}", file=sys.stderr)
        return EXIT_DICT
    except MalformedBitstream as exc:
        print(f"clc: malformed stream: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except (ClcError, OSError) as exc:
        print(f"clc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
