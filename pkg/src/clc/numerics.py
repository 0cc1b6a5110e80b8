"""Dense linear algebra and probability primitives.

Everything here is a pure function of its inputs.  Randomness always comes
from a caller-owned :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import ndtr

from .errors import ContractViolation, InvalidArgument

__all__ = [
    "PcaBasis",
    "Subspace",
    "sym_eig",
    "pca_fit",
    "pca_project",
    "pca_reconstruct",
    "sin_theta_dist",
    "softmax_rows",
    "gaussian_cdf",
    "sample_gaussian",
    "orthonormal_complete",
]


@njit(cache=True)
def _jacobi_sweeps(a, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    if scale == 0.0:
        return a, v
    stop = scale * 1e-30
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return a, v


def _fix_signs(vectors: np.ndarray, axis: int) -> np.ndarray:
    """Flip each vector so its largest-magnitude entry is positive."""
    vecs = np.moveaxis(vectors, axis, 0)
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(vecs.shape[0]), idx])
    signs[signs == 0] = 1.0
    return np.moveaxis(vecs * signs[:, None], 0, axis)


def sym_eig(a, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvectors as orthonormal columns.  Each eigenvector is
    signed so that its largest-magnitude component is positive.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"sym_eig needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation("sym_eig input has non-finite entries")
    tol = 1e-9 * max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and np.max(np.abs(a - a.T)) > tol:
        raise ContractViolation("sym_eig input is not symmetric")
    if a.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    a = 0.5 * (a + a.T)
    diag, vecs = _jacobi_sweeps(a, max_sweeps)
    vals = np.diag(diag).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order], axis=1)
    return vals, vecs


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,)

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray  # (dim, r), orthonormal columns
    degenerate_gap: bool = False

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def orthonormal_complete(rows: np.ndarray, d: int, k: int) -> np.ndarray:
    """Extend orthonormal ``rows`` (m x d) to ``k`` orthonormal rows.

    New rows come from Gram-Schmidt over the standard basis, so the result
    is deterministic.
    """
    out = [r for r in np.asarray(rows, dtype=np.float64).reshape(-1, d)]
    for i in range(d):
        if len(out) >= k:
            break
        e = np.zeros(d)
        e[i] = 1.0
        for _ in range(2):
            for r in out:
                e -= (r @ e) * r
        norm = np.linalg.norm(e)
        if norm > 1e-8:
            out.append(e / norm)
    return np.array(out[:k]).reshape(k, d)


def pca_fit(samples, k: int, center: bool = True) -> PcaBasis:
    """Fit a k-component PCA basis.

    Variances use the 1/n normalisation, so the mean squared reconstruction
    error with k components equals the sum of the discarded eigenvalues.
    Uses the d x d covariance when d <= n and the n x n Gram matrix otherwise.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgument("pca_fit expects an n x d sample matrix")
    n, d = x.shape
    if n < 2 and center:
        raise InvalidArgument("pca_fit needs at least two samples")
    if k < 1 or k > min(n, d):
        raise InvalidArgument(f"k={k} outside [1, min(n, d)={min(n, d)}]")
    mean = x.mean(axis=0) if center else np.zeros(d)
    xc = x - mean
    if d <= n:
        vals, vecs = sym_eig(xc.T @ xc / n)
        comps = vecs[:, :k].T
        var = vals[:k]
    else:
        vals, vecs = sym_eig(xc @ xc.T / n)
        thresh = max(float(vals[0]), 1.0) * 1e-12 if vals.size else 0.0
        comps = []
        var = []
        for i in range(k):
            if vals[i] <= thresh:
                break
            u = xc.T @ vecs[:, i] / math.sqrt(n * vals[i])
            comps.append(u / np.linalg.norm(u))
            var.append(vals[i])
        m = len(comps)
        comps = orthonormal_complete(np.array(comps).reshape(m, d), d, k)
        var = np.concatenate([np.array(var), np.zeros(k - m)])
        comps = _fix_signs(comps, axis=0)
    var = np.maximum(np.asarray(var, dtype=np.float64), 0.0)
    return PcaBasis(mean=mean, components=np.ascontiguousarray(comps), explained_variance=var)


def pca_project(basis: PcaBasis, v) -> np.ndarray:
    """Project one vector (or a batch of row vectors) onto the basis."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != basis.input_dim:
        raise InvalidArgument(
            f"vector length {v.shape[-1]} does not match PCA input dim {basis.input_dim}"
        )
    return (v - basis.mean) @ basis.components.T


def pca_reconstruct(basis: PcaBasis, coords) -> np.ndarray:
    return np.asarray(coords, dtype=np.float64) @ basis.components + basis.mean


def sin_theta_dist(u, v) -> float:
    """Frobenius norm of the sines of the principal angles between two subspaces."""
    ub = u.basis if isinstance(u, Subspace) else np.asarray(u, dtype=np.float64)
    vb = v.basis if isinstance(v, Subspace) else np.asarray(v, dtype=np.float64)
    if ub.ndim == 1:
        ub = ub[:, None]
    if vb.ndim == 1:
        vb = vb[:, None]
    if ub.shape[0] != vb.shape[0]:
        raise InvalidArgument("subspaces live in different ambient dimensions")
    if ub.shape[1] != vb.shape[1]:
        raise InvalidArgument(f"rank mismatch: {ub.shape[1]} vs {vb.shape[1]}")
    r = ub.shape[1]
    overlap = float(np.sum((ub.T @ vb) ** 2))
    return math.sqrt(min(max(r - overlap, 0.0), float(r)))


def softmax_rows(m, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise InvalidArgument("softmax temperature must be positive")
    z = np.asarray(m, dtype=np.float64) / temperature
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("softmax input has non-finite entries")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gaussian_cdf(x):
    """Standard normal CDF; scalar in, float out; arrays are vectorised."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    return ndtr(np.asarray(x, dtype=np.float64))


def sample_gaussian(rng: np.random.Generator, mean, std, shape) -> np.ndarray:
    if np.any(np.asarray(std) < 0):
        raise InvalidArgument("standard deviation must be non-negative")
    if np.all(np.asarray(std) == 0):
        return np.broadcast_to(np.asarray(mean, dtype=np.float64), shape).copy()
    return rng.normal(mean, std, size=shape)
