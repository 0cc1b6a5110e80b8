"""PSNR and Bjontegaard delta metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = ["RdPoint", "RdCurve", "psnr", "mse", "bd_rate", "bd_psnr"]


@dataclass(frozen=True)
class RdPoint:
    rate: float  # bits per pixel
    psnr: float  # dB, inf for lossless
    tag: str = ""


@dataclass(frozen=True)
class RdCurve:
    points: tuple[RdPoint, ...]

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.rate))
        if any(p.rate <= 0 for p in pts):
            raise InvalidArgument("rates must be positive")
        if any(b.rate <= a.rate for a, b in zip(pts, pts[1:])):
            raise InvalidArgument("rates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, rates, psnrs, tag: str = "") -> "RdCurve":
        return cls(tuple(RdPoint(float(r), float(q), tag) for r, q in zip(rates, psnrs)))

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE); identical images give ``inf``."""
    m = mse(a, b)
    return math.inf if m == 0 else 10.0 * math.log10(peak * peak / m)


def _curve(c) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(c, RdCurve):
        r, q = c.rates, c.psnrs
    else:
        r, q = (np.asarray(v, dtype=np.float64) for v in c)
    if r.size < 4:
        raise InvalidArgument("BD metrics need at least four points per curve")
    if not np.all(np.isfinite(q)):
        raise InvalidArgument("BD metrics need finite PSNR values")
    return r, q


def _integral(poly, lo, hi):
    p_int = np.polyint(poly)
    return np.polyval(p_int, hi) - np.polyval(p_int, lo)


def bd_rate(test, anchor) -> float:
    """Average rate difference in percent at equal PSNR; negative means savings.

    Classic cubic fit of log10(rate) as a function of PSNR, integrated over
    the overlapping PSNR interval.
    """
    r1, q1 = _curve(anchor)
    r2, q2 = _curve(test)
    lo, hi = max(q1.min(), q2.min()), min(q1.max(), q2.max())
    if not hi > lo:
        raise InvalidArgument("RD curves have no overlapping PSNR range")
    p1 = np.polyfit(q1, np.log10(r1), 3)
    p2 = np.polyfit(q2, np.log10(r2), 3)
    avg = (_integral(p2, lo, hi) - _integral(p1, lo, hi)) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)


def bd_psnr(test, anchor) -> float:
    """Average PSNR difference in dB at equal rate; positive means better."""
    r1, q1 = _curve(anchor)
    r2, q2 = _curve(test)
    l1, l2 = np.log10(r1), np.log10(r2)
    lo, hi = max(l1.min(), l2.min()), min(l1.max(), l2.max())
    if not hi > lo:
        raise InvalidArgument("RD curves have no overlapping rate range")
    p1 = np.polyfit(l1, q1, 3)
    p2 = np.polyfit(l2, q2, 3)
    return float((_integral(p2, lo, hi) - _integral(p1, lo, hi)) / (hi - lo))
