"""Block-DCT analysis/synthesis transforms and the log-RMS hyper transform."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Latent",
    "HyperLatent",
    "dct_matrix",
    "zigzag_order",
    "slice_groups",
    "analysis",
    "synthesis",
    "hyper_analysis",
    "hyper_synthesis",
    "HYPER_STEP",
    "HYPER_CLAMP",
    "SIGMA_MIN",
]

HYPER_STEP = 0.25
HYPER_CLAMP = 8.0
SIGMA_MIN = 0.04


@dataclass(frozen=True)
class Latent:
    """Block coefficients, shape (planes * p * p, rows of blocks, cols of blocks).

    Channel ``plane * p * p + u * p + v`` holds DCT coefficient (u, v) of
    that plane, u being the vertical frequency.
    """

    data: np.ndarray
    p: int
    planes: int
    height: int  # original image size before padding
    width: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def blocks_y(self) -> int:
        return self.data.shape[1]

    @property
    def blocks_x(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "Latent":
        if data.shape != self.data.shape:
            raise InvalidArgument(f"latent shape {data.shape} != {self.data.shape}")
        return Latent(data, self.p, self.planes, self.height, self.width)

    def plane_view(self) -> np.ndarray:
        """(planes, p*p, by, bx) view of the coefficients."""
        return self.data.reshape(self.planes, self.p * self.p, self.blocks_y, self.blocks_x)


@dataclass(frozen=True)
class HyperLatent:
    codes: np.ndarray  # int16, (planes, groups, by, bx)
    step: float = HYPER_STEP


@lru_cache(maxsize=None)
def dct_matrix(p: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row u is the u-th basis function."""
    n = np.arange(p)
    m = np.cos(np.pi * (2 * n[None, :] + 1) * n[:, None] / (2 * p)) * np.sqrt(2.0 / p)
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def zigzag_order(p: int) -> np.ndarray:
    """Coefficient indices u*p+v in JPEG zig-zag order."""
    cells = sorted(
        ((u, v) for u in range(p) for v in range(p)),
        key=lambda t: (t[0] + t[1], t[0] if (t[0] + t[1]) % 2 else t[1]),
    )
    out = np.array([u * p + v for u, v in cells], dtype=np.int64)
    out.setflags(write=False)
    return out


def slice_groups(p: int, k: int) -> np.ndarray:
    """(k, p*p/k) coefficient indices, low frequencies in group 0."""
    n = p * p
    if k < 1 or n % k:
        raise InvalidArgument(f"{n} coefficients cannot be split into {k} equal slices")
    return zigzag_order(p).reshape(k, n // k)


def _as_hwc(image) -> np.ndarray:
    a = np.asarray(image.data if hasattr(image, "data") else image)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidArgument(f"cannot transform an image of shape {a.shape}")
    return a


def analysis(image, p: int = 16) -> Latent:
    """Centre on 128, pad by edge replication, and take a p x p block DCT per plane."""
    img = _as_hwc(image)
    if p < 1:
        raise InvalidArgument("block size must be positive")
    h, w, planes = img.shape
    hp, wp = -(-h // p) * p, -(-w // p) * p
    x = np.pad(img.astype(np.float64), ((0, hp - h), (0, wp - w), (0, 0)), mode="edge") - 128.0
    by, bx = hp // p, wp // p
    d = dct_matrix(p)
    # (planes, by, p, bx, p) -> coefficients (planes, u, v, by, bx)
    blocks = x.transpose(2, 0, 1).reshape(planes, by, p, bx, p)
    coef = np.einsum("ui,cyixj,vj->cuvyx", d, blocks, d, optimize=True)
    return Latent(np.ascontiguousarray(coef.reshape(planes * p * p, by, bx)), p, planes, h, w)


def synthesis(latent: Latent) -> np.ndarray:
    """Inverse block DCT, add 128, round, clamp to 8 bits, crop the padding.

    Returns an (height, width, planes) uint8 array.
    """
    p, planes = latent.p, latent.planes
    by, bx = latent.blocks_y, latent.blocks_x
    if latent.channels != planes * p * p:
        raise InvalidArgument("latent channel count does not match planes * p^2")
    if by * p < latent.height or bx * p < latent.width:
        raise InvalidArgument("latent grid is smaller than the recorded image size")
    d = dct_matrix(p)
    coef = latent.data.reshape(planes, p, p, by, bx)
    blocks = np.einsum("ui,cuvyx,vj->cyixj", d, coef, d, optimize=True)
    x = blocks.reshape(planes, by * p, bx * p).transpose(1, 2, 0) + 128.0
    x = np.clip(np.rint(x), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(x[: latent.height, : latent.width])


def hyper_analysis(latent: Latent, k: int = 8) -> HyperLatent:
    """Quantized log2 RMS of every (plane, slice group, block)."""
    groups = slice_groups(latent.p, k)
    v = latent.plane_view()[:, groups]  # (planes, k, n/k, by, bx)
    rms = np.sqrt(np.mean(v * v, axis=2))
    with np.errstate(divide="ignore"):
        lg = np.log2(rms)
    lg = np.clip(lg, -HYPER_CLAMP, HYPER_CLAMP)
    codes = np.rint(lg / HYPER_STEP).astype(np.int16)
    return HyperLatent(codes, HYPER_STEP)


def hyper_synthesis(hyper: HyperLatent) -> np.ndarray:
    """Per-group scale sigma = 2^(code * step), floored at SIGMA_MIN."""
    return np.maximum(np.exp2(hyper.codes.astype(np.float64) * hyper.step), SIGMA_MIN)
