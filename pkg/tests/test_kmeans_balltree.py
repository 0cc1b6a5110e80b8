import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clc.balltree import ball_tree_build, ball_tree_knn, brute_force_knn, point_dists
from clc.errors import InvalidArgument
from clc.kmeans import inertia, minibatch_kmeans, select_representatives


def _best_2_partition(points):
    """Exhaustive oracle: the 2-partition with the lowest inertia."""
    n = len(points)
    best = None
    for mask in itertools.product([0, 1], repeat=n):
        m = np.array(mask)
        if m.all() or not m.any():
            continue
        cs = np.array([points[m == j].mean(axis=0) for j in (0, 1)])
        cost = sum(np.sum((points[m == j] - cs[j]) ** 2) for j in (0, 1))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, cs)
    return best


def test_kmeans_two_columns():
    pts = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], dtype=float)
    cost, oracle = _best_2_partition(pts)
    c, lab = minibatch_kmeans(pts, 2, batch=4, iters=20, rng=np.random.default_rng(0))
    got = sorted(map(tuple, np.round(c, 9)))
    want = sorted(map(tuple, np.round(oracle, 9)))
    assert got == want == [(0.0, 0.5), (10.0, 0.5)]
    assert inertia(pts, c, lab) == pytest.approx(cost)


def test_kmeans_k_equals_n(rng):
    pts = rng.normal(size=(7, 3))
    c, lab = minibatch_kmeans(pts, 7, 7, 10, np.random.default_rng(1))
    assert inertia(pts, c, lab) == pytest.approx(0.0, abs=1e-20)
    assert sorted(lab.tolist()) == list(range(7))


def test_kmeans_duplicated_data():
    g = np.random.default_rng(4)
    pts = np.concatenate([g.normal(size=(20, 2)) + o for o in ([0, 0], [8, 0], [0, 8])])
    a, _ = minibatch_kmeans(pts, 3, 10_000, 50, np.random.default_rng(2))
    b, _ = minibatch_kmeans(np.repeat(pts, 2, axis=0), 3, 10_000, 50, np.random.default_rng(2))
    key = lambda c: c[np.lexsort(c.T[::-1])]
    np.testing.assert_allclose(key(a), key(b), atol=1e-6)


def test_kmeans_errors():
    with pytest.raises(InvalidArgument):
        minibatch_kmeans(np.zeros((3, 2)), 4, 2, 1, np.random.default_rng(0))


def test_select_representatives():
    pts = np.array([[0, 0], [0, 1], [5, 5]], dtype=float)
    reps = select_representatives(pts, np.array([[0, 0.4], [5, 5]]), np.array([0, 0, 1]))
    assert reps.tolist() == [0, 2]
    tie = select_representatives(pts[:2], np.array([[0, 0.5]]), np.array([0, 0]))
    assert tie.tolist() == [0]


def test_tree_single_point():
    t = ball_tree_build(np.array([[1.0, 2.0]]))
    assert t.root.is_leaf and t.depth() == 0
    ids, d = ball_tree_knn(t, [1.0, 2.0], 1)
    assert ids.tolist() == [0] and d[0] == 0


def test_tree_depth_on_line():
    pts = np.linspace(0, 1, 1024)[:, None] * np.ones((1, 3))
    t = ball_tree_build(pts, leaf_size=8)
    assert t.depth() == int(np.log2(1024 / 8))


def _check_containment(tree):
    for node in tree.nodes():
        ids = node.ids if node.is_leaf else np.concatenate([l.ids for l in _leaves(node)])
        assert point_dists(tree.points[ids], node.centroid).max() <= node.radius + 1e-12


def _leaves(node):
    if node.is_leaf:
        return [node]
    return _leaves(node.children[0]) + _leaves(node.children[1])


def test_tree_radii_contain_points(rng):
    _check_containment(ball_tree_build(rng.normal(size=(300, 5)), leaf_size=4))


def test_knn_matches_brute_force_64d():
    g = np.random.default_rng(9)
    pts = g.normal(size=(1000, 64))
    tree = ball_tree_build(pts)
    for q in g.normal(size=(100, 64)):
        ids, d = ball_tree_knn(tree, q, 5)
        bi, bd = brute_force_knn(pts, q, 5)
        assert ids.tolist() == bi.tolist()
        np.testing.assert_allclose(d, bd, rtol=0, atol=1e-12)


def test_knn_stored_key_and_all():
    g = np.random.default_rng(3)
    pts = g.normal(size=(40, 4))
    tree = ball_tree_build(pts, 3)
    ids, d = ball_tree_knn(tree, pts[17], 1)
    assert ids[0] == 17 and d[0] == 0
    ids, d = ball_tree_knn(tree, g.normal(size=4), 40)
    assert sorted(ids.tolist()) == list(range(40))
    assert np.all(np.diff(d) >= 0)
    with pytest.raises(InvalidArgument):
        ball_tree_knn(tree, pts[0], 41)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 60), st.integers(1, 6), st.integers(1, 10))
def test_knn_property_with_ties(seed, n, m, leaf):
    g = np.random.default_rng(seed)
    # coarse integer grid forces many exact distance ties
    pts = g.integers(-2, 3, size=(n, 3)).astype(float)
    q = g.integers(-2, 3, size=3).astype(float)
    m = min(m, n)
    ids, d = ball_tree_knn(ball_tree_build(pts, leaf), q, m)
    bi, bd = brute_force_knn(pts, q, m)
    assert ids.tolist() == bi.tolist()
    np.testing.assert_array_equal(d, bd)
