"""Hand-crafted patch descriptors: a fixed 12-band filter bank followed by
spatial pyramid pooling.

The descriptor is deterministic and framework-free; it stands in for a deep
backbone while keeping the pool -> PCA -> cluster pipeline intact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument
from .numerics import PcaBasis, pca_project

__all__ = [
    "ImagePatch",
    "FeatureMap",
    "FeatureVector",
    "BANDS",
    "SPP_SCALES",
    "RAW_DIM",
    "to_gray",
    "filter_bank",
    "spp_pool",
    "extract_feature",
]

BANDS = (
    "intensity",
    "abs_dx",
    "abs_dy",
    "grad_mag_s1",
    "grad_mag_s2",
    "edge_0",
    "edge_45",
    "edge_90",
    "edge_135",
    "local_var",
    "abs_laplacian",
    "coarse_mean",
)
SPP_SCALES = (1, 2, 4)
RAW_DIM = len(BANDS) * sum(s * s for s in SPP_SCALES)  # 252
MIN_PATCH = 16
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImagePatch:
    """8-bit image stored as an (height, width, channels) uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise InvalidArgument(f"patch must be HxW, HxWx1 or HxWx3, got {d.shape}")
        object.__setattr__(self, "data", np.ascontiguousarray(d, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def rot90(self) -> "ImagePatch":
        return ImagePatch(np.rot90(self.data, k=1, axes=(0, 1)))


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray  # (bands, height, width)

    @property
    def bands(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    data: np.ndarray
    normalized: bool = True

    def __len__(self) -> int:
        return self.data.shape[0]


def _as_patch(patch) -> ImagePatch:
    return patch if isinstance(patch, ImagePatch) else ImagePatch(np.asarray(patch))


def to_gray(patch: ImagePatch) -> np.ndarray:
    """Grayscale in [0, 1] using fixed luma weights."""
    d = patch.data.astype(np.float64)
    if patch.channels == 3:
        g = d @ GRAY_WEIGHTS
    else:
        g = d[:, :, 0]
    return g / 255.0


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def filter_bank(patch) -> FeatureMap:
    patch = _as_patch(patch)
    if patch.height < MIN_PATCH or patch.width < MIN_PATCH:
        raise InvalidArgument(
            f"patch {patch.width}x{patch.height} is smaller than {MIN_PATCH}x{MIN_PATCH}"
        )
    g = to_gray(patch)
    # central differences with replicated borders
    dx = ndimage.correlate1d(g, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
    dy = ndimage.correlate1d(g, [-0.5, 0.0, 0.5], axis=0, mode="nearest")

    def grad_mag(sigma):
        b = ndimage.gaussian_filter(g, sigma, mode="nearest")
        bx = ndimage.correlate1d(b, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
        by = ndimage.correlate1d(b, [-0.5, 0.0, 0.5], axis=0, mode="nearest")
        return np.hypot(bx, by)

    edges = []
    for angle in (0.0, 45.0, 90.0, 135.0):
        t = np.deg2rad(angle)
        edges.append((np.cos(t) * dx + np.sin(t) * dy) ** 2)

    mean3 = ndimage.uniform_filter(g, 3, mode="nearest")
    var3 = np.maximum(ndimage.uniform_filter(g * g, 3, mode="nearest") - mean3 * mean3, 0.0)
    lap = np.abs(ndimage.laplace(g, mode="nearest"))
    coarse = ndimage.uniform_filter(g, 9, mode="nearest")

    bands = [g, np.abs(dx), np.abs(dy), grad_mag(1.0), grad_mag(2.0), *edges, var3, lap, coarse]
    out = np.stack(bands)
    # flat regions must give exact zeros, not 1e-17 noise from the filters
    out[1:11][np.abs(out[1:11]) < 1e-12] = 0.0
    return FeatureMap(out)


def _cell_edges(n: int, s: int) -> list[int]:
    return [i * n // s for i in range(s + 1)]


def spp_pool(fmap, scales=SPP_SCALES, normalize: bool = True) -> FeatureVector:
    """Mean-pool each band over a pyramid of grids.

    Output layout is scale-major, then row-major cells, then band.
    """
    data = fmap.data if isinstance(fmap, FeatureMap) else np.asarray(fmap, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    bands, h, w = data.shape
    finest = max(scales)
    if h < finest or w < finest:
        raise InvalidArgument(f"feature map {w}x{h} too small for a {finest}x{finest} grid")
    parts = []
    for s in scales:
        ys, xs = _cell_edges(h, s), _cell_edges(w, s)
        for i in range(s):
            for j in range(s):
                cell = data[:, ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
                parts.append(cell.mean(axis=(1, 2)))
    vec = np.concatenate(parts)
    if normalize:
        vec = _l2_normalize(vec)
    return FeatureVector(vec, normalized=normalize)


def extract_feature(patch, pca: PcaBasis | None = None) -> FeatureVector:
    """filter_bank -> spp_pool -> optional PCA projection -> L2 normalisation."""
    vec = spp_pool(filter_bank(patch)).data
    if pca is not None:
        if pca.input_dim != RAW_DIM:
            raise InvalidArgument(f"PCA input dim {pca.input_dim} != {RAW_DIM}")
        vec = pca_project(pca, vec)
    return FeatureVector(_l2_normalize(vec), normalized=True)
