"""Exact Euclidean k-nearest-neighbour search with a ball tree."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = ["BallNode", "BallTree", "ball_tree_build", "ball_tree_knn", "brute_force_knn", "point_dists"]


def point_dists(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distances from ``q`` to each row; shared by tree and brute force."""
    diff = points - q
    return np.sqrt(np.sum(diff * diff, axis=1))


@dataclass
class BallNode:
    centroid: np.ndarray
    radius: float
    ids: np.ndarray | None = None  # set on leaves
    children: tuple["BallNode", "BallNode"] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class BallTree:
    points: np.ndarray
    root: BallNode
    leaf_size: int = 8

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def depth(self) -> int:
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(c) for c in node.children)
        return walk(self.root)

    def leaves(self) -> list[BallNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(node.children)
        return out

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend(node.children)


def _make_node(points: np.ndarray, ids: np.ndarray, leaf_size: int) -> BallNode:
    sub = points[ids]
    centroid = sub.mean(axis=0)
    radius = float(point_dists(sub, centroid).max())
    if ids.size <= leaf_size:
        return BallNode(centroid, radius, ids=ids)
    # farthest-pair seeding: a = farthest from the first point, b = farthest from a
    a = int(np.argmax(point_dists(sub, sub[0])))
    b = int(np.argmax(point_dists(sub, sub[a])))
    to_b = point_dists(sub, sub[b]) < point_dists(sub, sub[a])
    if a == b or to_b.all() or not to_b.any():
        return BallNode(centroid, radius, ids=ids)
    left = _make_node(points, ids[~to_b], leaf_size)
    right = _make_node(points, ids[to_b], leaf_size)
    return BallNode(centroid, radius, children=(left, right))


def ball_tree_build(keys, leaf_size: int = 8) -> BallTree:
    pts = np.ascontiguousarray(np.asarray(keys, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InvalidArgument("ball tree needs at least one point")
    if leaf_size < 1:
        raise InvalidArgument("leaf_size must be positive")
    root = _make_node(pts, np.arange(pts.shape[0]), leaf_size)
    return BallTree(pts, root, leaf_size)


def ball_tree_knn(tree: BallTree, query, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact m nearest neighbours, ordered by (distance, id).

    Branch and bound: a node is skipped only when its lower bound
    ``|q - c| - r`` is strictly larger than the current m-th best distance,
    so equal-distance candidates with smaller ids are never lost.
    """
    q = np.asarray(query.data if hasattr(query, "data") else query, dtype=np.float64)
    n = tree.size
    if m < 1 or m > n:
        raise InvalidArgument(f"m={m} must lie in [1, {n}]")
    # max-heap of (-dist, -id): the root is the worst kept candidate
    best: list[tuple[float, int]] = []

    def worst() -> float:
        return -best[0][0] if len(best) == m else np.inf

    def offer(dist: float, idx: int):
        item = (-dist, -idx)
        if len(best) < m:
            heapq.heappush(best, item)
        elif item > best[0]:
            heapq.heapreplace(best, item)

    def lower_bound(node: BallNode) -> float:
        dc = float(np.sqrt(np.sum((q - node.centroid) ** 2)))
        # slack keeps floating-point rounding from pruning an exact tie
        return max(dc - node.radius - 1e-12 * (1.0 + dc), 0.0)

    frontier = [(lower_bound(tree.root), 0, tree.root)]
    counter = 1
    while frontier:
        bound, _, node = heapq.heappop(frontier)
        if bound > worst():
            break
        if node.is_leaf:
            d = point_dists(tree.points[node.ids], q)
            for dist, idx in zip(d.tolist(), node.ids.tolist()):
                offer(dist, idx)
        else:
            for child in node.children:
                b = lower_bound(child)
                if b <= worst():
                    heapq.heappush(frontier, (b, counter, child))
                    counter += 1
    res = sorted((-nd, -ni) for nd, ni in best)
    return np.array([i for _, i in res], dtype=np.int64), np.array([d for d, _ in res])


def brute_force_knn(points, query, m: int) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    d = point_dists(pts, q)
    order = np.lexsort((np.arange(pts.shape[0]), d))[:m]
    return order.astype(np.int64), d[order]
