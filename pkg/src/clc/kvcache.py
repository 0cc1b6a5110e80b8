"""Attention-style key/value cache used to short-circuit repeated queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCacheError, InvalidArgument
from .numerics import orthonormal_complete, pca_fit, softmax_rows

__all__ = ["KvCache", "kv_attend", "kv_compress", "kv_evict", "relevance"]

RECENCY_WEIGHT = 0.1


@dataclass
class KvCache:
    """Rows of (key, value) with usage statistics.

    ``payloads`` holds an arbitrary Python object per row (retrieval results).
    After :func:`kv_compress` the keys live in a reduced space; queries must
    be mapped through :meth:`project_query` first.  ``scale_dim`` keeps the
    original key width so the attention temperature does not change.
    """

    capacity: int = 300
    keys: np.ndarray | None = None
    values: np.ndarray | None = None
    hit_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    insert_clock: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    payloads: list = field(default_factory=list)
    clock: int = 0
    scale_dim: int | None = None
    key_basis: np.ndarray | None = None  # (d', d_k) rows, set once compressed
    value_basis: np.ndarray | None = None
    owner: bytes | None = None  # content hash of the dictionary the rows came from

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidArgument("cache capacity must be positive")

    def __len__(self) -> int:
        return 0 if self.keys is None else self.keys.shape[0]

    @property
    def d_k(self) -> int:
        return 0 if self.keys is None else self.keys.shape[1]

    def project_query(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        return q if self.key_basis is None else self.key_basis @ q

    def insert(self, key, value, payload=None) -> int:
        """Append one row and return its index.  Does not evict."""
        key = self.project_query(key)
        value = np.asarray(value, dtype=np.float64)
        if self.value_basis is not None:
            value = self.value_basis @ value
        if self.keys is None:
            self.keys = key[None].copy()
            self.values = value[None].copy()
            if self.scale_dim is None:
                self.scale_dim = key.shape[0]
        else:
            if key.shape[0] != self.keys.shape[1] or value.shape[0] != self.values.shape[1]:
                raise InvalidArgument("key/value width does not match the cache")
            self.keys = np.vstack([self.keys, key])
            self.values = np.vstack([self.values, value])
        self.hit_counts = np.append(self.hit_counts, 0)
        self.insert_clock = np.append(self.insert_clock, self.clock)
        self.payloads.append(payload)
        self.clock += 1
        return len(self) - 1

    def lookup(self, q, tol: float = 1e-6) -> int | None:
        """Index of the nearest stored key if it lies within ``tol``."""
        if len(self) == 0:
            return None
        d = np.sqrt(np.sum((self.keys - self.project_query(q)) ** 2, axis=1))
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def clear(self):
        self.keys = self.values = None
        self.hit_counts = np.zeros(0, dtype=np.int64)
        self.insert_clock = np.zeros(0, dtype=np.int64)
        self.payloads = []
        self.scale_dim = self.key_basis = self.value_basis = None


def kv_attend(q, cache: KvCache) -> tuple[np.ndarray, np.ndarray]:
    """softmax(q K^T / sqrt(d_k)) V.

    Returns ``(output, weights)``.
    """
    if len(cache) == 0:
        raise EmptyCacheError("cannot attend over an empty cache")
    q = cache.project_query(q)
    if q.shape[0] != cache.d_k:
        raise InvalidArgument(f"query length {q.shape[0]} != d_k {cache.d_k}")
    logits = cache.keys @ q / math.sqrt(cache.scale_dim)
    w = softmax_rows(logits[None], 1.0)[0]
    return w @ cache.values, w


def _reduce(rows: np.ndarray, target: int) -> np.ndarray:
    n, d = rows.shape
    k = min(target, n)
    # uncentered, so inner products with in-span queries survive projection
    comps = pca_fit(rows, k, center=False).components
    return orthonormal_complete(comps, d, target) if k < target else comps


def kv_compress(cache: KvCache, target_dim: int) -> KvCache:
    """Project keys and values onto their leading uncentered principal axes.

    Keys and values get separate bases.  Values already narrower than
    ``target_dim`` are left alone.
    """
    if len(cache) == 0:
        raise EmptyCacheError("cannot compress an empty cache")
    if target_dim < 1 or target_dim >= cache.d_k:
        raise InvalidArgument(f"target dim {target_dim} must lie in [1, {cache.d_k})")
    kb = _reduce(cache.keys, target_dim)
    keys = cache.keys @ kb.T
    key_basis = kb if cache.key_basis is None else kb @ cache.key_basis
    values, value_basis = cache.values, cache.value_basis
    if values.shape[1] > target_dim:
        vb = _reduce(values, target_dim)
        values = values @ vb.T
        value_basis = vb if value_basis is None else vb @ value_basis
    return KvCache(
        capacity=cache.capacity,
        keys=keys,
        values=values,
        hit_counts=cache.hit_counts.copy(),
        insert_clock=cache.insert_clock.copy(),
        payloads=list(cache.payloads),
        clock=cache.clock,
        scale_dim=cache.scale_dim,
        key_basis=key_basis,
        value_basis=value_basis,
        owner=cache.owner,
    )


def relevance(cache: KvCache) -> np.ndarray:
    """hit count + 0.1 * recency rank (oldest row has rank 0)."""
    order = np.argsort(cache.insert_clock, kind="stable")
    rank = np.empty(len(cache))
    rank[order] = np.arange(len(cache))
    return cache.hit_counts + RECENCY_WEIGHT * rank


def kv_evict(cache: KvCache, keep: int) -> KvCache:
    """Keep the ``keep`` most relevant rows; ties favour newer rows."""
    n = len(cache)
    if keep < 1:
        raise InvalidArgument("keep must be at least 1")
    if keep >= n:
        return cache
    rho = relevance(cache)
    order = np.lexsort((-cache.insert_clock, -rho))
    kept = np.sort(order[:keep])
    return KvCache(
        capacity=cache.capacity,
        keys=cache.keys[kept],
        values=cache.values[kept],
        hit_counts=cache.hit_counts[kept],
        insert_clock=cache.insert_clock[kept],
        payloads=[cache.payloads[i] for i in kept],
        clock=cache.clock,
        scale_dim=cache.scale_dim,
        key_basis=cache.key_basis,
        value_basis=cache.value_basis,
        owner=cache.owner,
    )
