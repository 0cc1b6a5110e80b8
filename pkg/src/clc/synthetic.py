"""Seeded procedural images with natural-image statistics.

Each image mixes a smooth illumination gradient, a 1/f texture field, a
few filled shapes with soft edges, and mild sensor noise.  They stand in
for a photo corpus in tests, benchmarks and the demo commands.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["natural_image", "noise_image", "corpus", "crop_patches"]


def _pink_field(rng: np.random.Generator, h: int, w: int, beta: float = 2.0) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    spec = (rng.normal(size=f.shape) + 1j * rng.normal(size=f.shape)) / f ** (beta / 2)
    spec[0, 0] = 0.0
    field = np.fft.irfft2(spec, s=(h, w))
    return field / (field.std() + 1e-12)


def natural_image(rng: np.random.Generator, h: int = 256, w: int = 256, channels: int = 3) -> np.ndarray:
    """One (h, w, channels) uint8 image."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.uniform(60, 190, size=channels)
    tilt = rng.normal(0, 40, size=(2, channels))
    img = base + yy[..., None] * tilt[0] + xx[..., None] * tilt[1]
    tex = _pink_field(rng, h, w)
    tint = rng.uniform(0.6, 1.4, size=channels)
    img = img + 22.0 * tex[..., None] * tint
    for _ in range(int(rng.integers(3, 8))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        if rng.random() < 0.5:
            mask = ((yy * max(h, w) - cy) / ry) ** 2 + ((xx * max(h, w) - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy * max(h, w) - cy) <= ry) & (np.abs(xx * max(h, w) - cx) <= rx)
        soft = ndimage.gaussian_filter(mask.astype(np.float64), rng.uniform(0.6, 2.0))
        img = img + soft[..., None] * rng.normal(0, 45, size=channels)
    img = img + rng.normal(0, 2.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def noise_image(rng: np.random.Generator, h: int = 256, w: int = 256, channels: int = 3) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, channels), dtype=np.uint8)


def corpus(seed: int, count: int, h: int = 256, w: int = 256, channels: int = 3) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [natural_image(rng, h, w, channels) for _ in range(count)]


def crop_patches(image: np.ndarray, size: int) -> list[np.ndarray]:
    """Non-overlapping size x size tiles in raster order; the ragged border is dropped."""
    h, w = image.shape[:2]
    return [
        np.ascontiguousarray(image[y:y + size, x:x + size])
        for y in range(0, h - size + 1, size)
        for x in range(0, w - size + 1, size)
    ]
