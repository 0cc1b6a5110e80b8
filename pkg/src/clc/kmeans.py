"""Mini-batch k-means with k-means++ seeding (Sculley-style per-center rates)."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument

__all__ = ["kmeans_pp_init", "minibatch_kmeans", "assign", "inertia", "select_representatives"]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center labels; ties go to the lower center index."""
    return np.argmin(_sq_dists(points, centers), axis=1)


def inertia(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    first = int(rng.integers(n))
    centers = [points[first]]
    closest = _sq_dists(points, points[first][None])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a center; pick uniformly
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx][None])[:, 0])
    return np.array(centers)


def _repair_empty(points, centers, labels):
    """Re-seed empty clusters from the points farthest from their centers."""
    k = centers.shape[0]
    centers = centers.copy()
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        dist = np.sum((points - centers[labels]) ** 2, axis=1)
        donors = counts[labels] > 1
        dist[~donors] = -1.0
        i = int(np.argmax(dist))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        centers[j] = points[i]
    return centers, labels


def minibatch_kmeans(
    points,
    k: int,
    batch: int,
    iters: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster ``points`` into ``k`` groups.

    Parameters
    ----------
    points : array, shape (n, d)
    k : int
        Number of centers, 1 <= k <= n.
    batch : int
        Mini-batch size.  When ``batch >= n`` every iteration sees the full
        data set, which turns the update into an online Lloyd step.
    iters : int
        Number of mini-batch iterations.
    rng : numpy.random.Generator
        Source of all randomness (seeding and batch sampling).

    Returns
    -------
    centroids : array, shape (k, d)
    labels : array, shape (n,)
        Nearest-centroid assignment; every cluster is non-empty.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k > n:
        raise InvalidArgument(f"k={k} must lie in [1, n={n}]")
    if batch < 1:
        raise InvalidArgument("batch must be at least 1")

    init = kmeans_pp_init(x, k, rng)
    centers = init.copy()
    seen = np.zeros(k)
    for _ in range(iters):
        if batch >= n:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=batch, replace=False)
        mb = x[idx]
        lab = assign(mb, centers)
        cnt = np.bincount(lab, minlength=k).astype(np.float64)
        sums = np.zeros_like(centers)
        np.add.at(sums, lab, mb)
        hit = cnt > 0
        # sequential 1/count updates collapse to a running mean per center
        centers[hit] = (seen[hit, None] * centers[hit] + sums[hit]) / (seen[hit] + cnt[hit])[:, None]
        seen += cnt

    labels = assign(x, centers)
    init_labels = assign(x, init)
    if inertia(x, init, init_labels) < inertia(x, centers, labels):
        centers, labels = init, init_labels
    return _repair_empty(x, centers, labels)


def select_representatives(points, centroids, labels) -> np.ndarray:
    """For every cluster, the index of the member closest to its centroid.

    Ties resolve to the lowest point index.
    """
    x = np.asarray(points, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.empty(c.shape[0], dtype=np.int64)
    for j in range(c.shape[0]):
        members = np.flatnonzero(labels == j)
        if members.size == 0:
            raise InvalidArgument(f"cluster {j} is empty")
        d = np.sum((x[members] - c[j]) ** 2, axis=1)
        out[j] = members[int(np.argmin(d))]
    return out
