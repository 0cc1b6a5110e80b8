"""Report figures written straight to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_rd_curves", "plot_bound_sweep", "plot_pr", "plot_eval"]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_rd_curves(curves: dict, path, title: str = "") -> Path:
    """``curves`` maps a label to (rates_bpp, psnr_db)."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, (r, q) in curves.items():
        ax.plot(r, q, marker="o", ms=3.5, lw=1.2, label=label)
    ax.set_xlabel("rate (bpp)")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def plot_bound_sweep(report, path) -> Path:
    """Median sin-theta error and fitted bound against n, one line per rho."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    rhos = sorted({c.params.rho for c in report.configs if not c.skipped})
    for i, rho in enumerate(rhos):
        cs = sorted((c for c in report.configs if not c.skipped and c.params.rho == rho), key=lambda c: c.params.n)
        n = np.array([c.params.n for c in cs])
        med = np.array([c.median for c in cs])
        lo = np.array([np.quantile(c.errors, 0.05) for c in cs])
        hi = np.array([np.quantile(c.errors, 0.95) for c in cs])
        color = f"C{i}"
        ax.errorbar(n, med, yerr=[med - lo, hi - med], color=color, marker="o", capsize=3, label=f"rho={rho:g}")
        ax.plot(n, report.c_fit * np.array([c.bound_unit for c in cs]), color=color, ls="--", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("samples n")
    ax.set_ylabel("sin-theta error")
    ax.set_title(f"fitted C = {report.c_fit:.3g}, violations {100 * report.violation_rate:.1f}%")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def plot_pr(pr: dict, path) -> Path:
    eps = sorted(pr)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(eps, [100 * pr[e] for e in eps], marker="s")
    ax.set_xlabel("perturbation level eps")
    ax.set_ylabel("PR (%)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_eval(names, bpp, psnr_db, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(bpp, psnr_db, s=14)
    for n, x, y in zip(names, bpp, psnr_db):
        ax.annotate(str(n), (x, y), fontsize=6, alpha=0.7)
    ax.set_xlabel("rate (bpp)")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(alpha=0.3)
    return _save(fig, path)
