"""Feature dictionary: build, persist, and query.

A dictionary is a set of representative patches, one per k-means cluster of
PCA-reduced patch features, indexed by an exact ball tree.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balltree import BallTree, ball_tree_build, ball_tree_knn
from .errors import (
    BadMagic,
    HashMismatch,
    InvalidArgument,
    TruncatedFile,
    VersionMismatch,
)
from .features import RAW_DIM, ImagePatch, extract_feature
from .kmeans import minibatch_kmeans, select_representatives
from .kvcache import KvCache, kv_evict
from .numerics import PcaBasis, pca_fit, pca_project

__all__ = [
    "DictConfig",
    "DictionaryEntry",
    "Dictionary",
    "build_dictionary",
    "dict_save",
    "dict_load",
    "dict_to_bytes",
    "dict_from_bytes",
    "retrieve",
    "CACHE_HIT_TOL",
]

MAGIC = b"CLCD"
VERSION = 1
CACHE_HIT_TOL = 1e-6


@dataclass(frozen=True)
class DictConfig:
    clusters: int = 256
    pca_dim: int = 64
    batch: int = 1024
    iters: int = 100
    seed: int = 0


@dataclass(frozen=True)
class DictionaryEntry:
    id: int
    key: np.ndarray
    payload: ImagePatch
    source_tag: str = ""


@dataclass
class Dictionary:
    entries: list[DictionaryEntry]
    pca: PcaBasis
    build_config: DictConfig
    content_hash: bytes = b""
    _tree: BallTree | None = field(default=None, repr=False, compare=False)
    _latents: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def feature_dim(self) -> int:
        return self.pca.k

    @property
    def keys(self) -> np.ndarray:
        return np.array([e.key for e in self.entries], dtype=np.float64)

    def tree(self, leaf_size: int = 8) -> BallTree:
        if self._tree is None or self._tree.leaf_size != leaf_size:
            self._tree = ball_tree_build(self.keys, leaf_size)
        return self._tree

    def query_feature(self, patch: ImagePatch) -> np.ndarray:
        return extract_feature(patch, self.pca).data


def _f32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def build_dictionary(patches, config: DictConfig = DictConfig(), tags=None) -> Dictionary:
    """Cluster patch features and keep the patch nearest each centroid.

    The PCA basis and keys are rounded to float32 before clustering so a
    dictionary read back from disk is indistinguishable from the one built
    in memory.
    """
    patches = [p if isinstance(p, ImagePatch) else ImagePatch(p) for p in patches]
    n = len(patches)
    k = config.clusters
    if k < 1 or n < k:
        raise InvalidArgument(f"need at least {k} patches, got {n}")
    tags = list(tags) if tags is not None else [f"patch{i}" for i in range(n)]
    raw = np.array([extract_feature(p).data for p in patches])
    dim = max(1, min(config.pca_dim, n, RAW_DIM))
    basis = pca_fit(raw, dim) if n >= 2 else PcaBasis(raw[0] * 0, np.eye(RAW_DIM)[:1], np.zeros(1))
    pca = PcaBasis(_f32(basis.mean), _f32(basis.components), _f32(basis.explained_variance))
    proj = pca_project(pca, raw)
    norms = np.linalg.norm(proj, axis=1, keepdims=True)
    keys = _f32(np.where(norms > 0, proj / np.where(norms > 0, norms, 1.0), proj))
    rng = np.random.default_rng(config.seed)
    centroids, labels = minibatch_kmeans(keys, k, config.batch, config.iters, rng)
    reps = select_representatives(keys, centroids, labels)
    entries = [DictionaryEntry(j, keys[i], patches[i], tags[i]) for j, i in enumerate(reps)]
    d = Dictionary(entries, pca, config)
    d.content_hash = hashlib.sha256(_body(d)).digest()
    return d


def _body(d: Dictionary) -> bytes:
    buf = io.BytesIO()
    w = buf.write
    pca = d.pca
    w(MAGIC)
    w(struct.pack("<HIII", VERSION, len(d.entries), pca.k, pca.input_dim))
    w(pca.mean.astype("<f4").tobytes())
    w(pca.components.astype("<f4").tobytes())
    w(pca.explained_variance.astype("<f4").tobytes())
    c = d.build_config
    w(struct.pack("<IIIIQ", c.clusters, c.pca_dim, c.batch, c.iters, c.seed))
    for e in d.entries:
        p = e.payload
        w(struct.pack("<I", e.id))
        w(np.asarray(e.key).astype("<f4").tobytes())
        w(struct.pack("<HHB", p.width, p.height, p.channels))
        w(p.data.tobytes())
        tag = e.source_tag.encode("utf-8")
        w(struct.pack("<H", len(tag)))
        w(tag)
    return buf.getvalue()


def dict_to_bytes(d: Dictionary) -> bytes:
    body = _body(d)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"dictionary ends at byte {len(self.data)}, needed {self.pos + n}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64)


def dict_from_bytes(data: bytes) -> Dictionary:
    if len(data) < 4:
        raise TruncatedFile("file too short for a dictionary header")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) >= 6 and struct.unpack("<H", data[4:6])[0] != VERSION:
        raise VersionMismatch(f"unsupported dictionary version {struct.unpack('<H', data[4:6])[0]}")
    r = _Reader(data[:-32] if len(data) >= 32 else data)
    r.take(4)
    _, count, dim, in_dim = r.unpack("<HIII")
    mean = r.f32(in_dim)
    comps = r.f32(dim * in_dim).reshape(dim, in_dim)
    var = r.f32(dim)
    clusters, pca_dim, batch, iters, seed = r.unpack("<IIIIQ")
    entries = []
    for _ in range(count):
        (eid,) = r.unpack("<I")
        key = r.f32(dim)
        w, h, ch = r.unpack("<HHB")
        pix = np.frombuffer(r.take(w * h * ch), dtype=np.uint8).reshape(h, w, ch)
        (tlen,) = r.unpack("<H")
        tag = r.take(tlen).decode("utf-8", "replace")  # corruption is caught by the hash
        entries.append(DictionaryEntry(eid, key, ImagePatch(pix.copy()), tag))
    if len(data) < 32 or r.pos != len(data) - 32:
        raise TruncatedFile("dictionary length does not match its header")
    digest = hashlib.sha256(data[:-32]).digest()
    if digest != data[-32:]:
        raise HashMismatch("dictionary content hash does not match")
    if [e.id for e in entries] != list(range(count)):
        raise HashMismatch("dictionary ids are not dense")
    return Dictionary(
        entries,
        PcaBasis(mean, comps, var),
        DictConfig(clusters, pca_dim, batch, iters, seed),
        digest,
    )


def dict_save(d: Dictionary, path) -> bytes:
    data = dict_to_bytes(d)
    Path(path).write_bytes(data)
    return d.content_hash


def dict_load(path) -> Dictionary:
    return dict_from_bytes(Path(path).read_bytes())


def _merge(results, m: int):
    best: dict[int, float] = {}
    for ids, dists in results:
        for i, dist in zip(ids.tolist(), dists.tolist()):
            if i not in best or dist < best[i]:
                best[i] = dist
    ranked = sorted(best.items(), key=lambda kv: (kv[1], kv[0]))[:m]
    return [i for i, _ in ranked], [dist for _, dist in ranked]


def retrieve(
    d: Dictionary,
    tree: BallTree | None,
    cache: KvCache | None,
    image,
    m: int = 3,
) -> tuple[list[DictionaryEntry], list[float], bool]:
    """Top-m entries for an image, queried with the image and its 90-degree rotation.

    The cache only short-circuits exact repeat queries; results never depend
    on it.  Returns ``(entries, distances, mutated)`` where ``mutated`` tells
    whether the cache changed.
    """
    if len(d) == 0:
        raise InvalidArgument("dictionary is empty")
    if m < 1:
        raise InvalidArgument("m must be at least 1")
    m = min(m, len(d))
    patch = image if isinstance(image, ImagePatch) else ImagePatch(image)
    q = d.query_feature(patch)
    mutated = False
    if cache is not None:
        if cache.owner != d.content_hash:
            cache.clear()
            cache.owner = d.content_hash
            mutated = True
        hit = cache.lookup(q, CACHE_HIT_TOL)
        if hit is not None and cache.payloads[hit][0] == m:
            _, ids, dists = cache.payloads[hit]
            cache.hit_counts[hit] += 1
            return [d.entries[i] for i in ids], list(dists), True
    tree = tree if tree is not None else d.tree()
    q_rot = d.query_feature(patch.rot90())
    ids, dists = _merge([ball_tree_knn(tree, q, m), ball_tree_knn(tree, q_rot, m)], m)
    if cache is not None:
        value = np.mean([d.entries[i].key for i in ids], axis=0)
        if len(cache) >= cache.capacity:
            trimmed = kv_evict(cache, cache.capacity - 1)
            cache.__dict__.update(trimmed.__dict__)
        cache.insert(q, value, (m, ids, dists))
        mutated = True
    return [d.entries[i] for i in ids], dists, mutated

