import itertools

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from capactive.clustering import kmeans_fit, nearest_centers
from capactive.core import DataError


def brute_inertia(X, C):
    best = np.inf
    for labels in itertools.product(range(C), repeat=len(X)):
        labels = np.array(labels)
        best = min(best, sum(((X[labels == c] - X[labels == c].mean(0)) ** 2).sum()
                             for c in range(C) if (labels == c).any()))
    return best


def test_singletons_when_c_matches_distinct_points():
    X = np.array([[0.0], [1.0], [1.0], [5.0]])
    m = kmeans_fit(X, 3, seed=0)
    assert m.n_clusters == 3 and m.inertia == 0.0
    assert m.assignments[1] == m.assignments[2]


def test_c_is_clamped_to_distinct_points():
    X = np.array([[1.0, 1.0]] * 4)
    m = kmeans_fit(X, 10, seed=0)
    assert m.n_clusters == 1


def test_single_cluster_is_the_mean(rng):
    X = rng.normal(size=(9, 3))
    m = kmeans_fit(X, 1, seed=1)
    assert np.allclose(m.centers[0], X.mean(0))


def test_two_obvious_groups():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    m = kmeans_fit(X, 2, seed=5)
    assert sorted(m.centers[:, 0].round(12)) == [0.05, 10.05]
    assert m.assignments[0] == m.assignments[1] != m.assignments[2] == m.assignments[3]
    assert m.inertia == pytest.approx(brute_inertia(X, 2))


def test_non_finite_rejected():
    with pytest.raises(DataError):
        kmeans_fit(np.array([[0.0], [np.nan]]), 1, seed=0)


def test_deterministic(rng):
    X = rng.normal(size=(30, 4))
    a, b = kmeans_fit(X, 4, seed=9), kmeans_fit(X, 4, seed=9)
    assert np.array_equal(a.centers, b.centers) and np.array_equal(a.assignments, b.assignments)


points = arrays(np.float64, st.tuples(st.integers(1, 25), st.integers(1, 3)),
                elements=st.floats(-50, 50, allow_nan=False).map(lambda x: round(x, 3)))


@given(points, st.integers(1, 6), st.integers(0, 1000))
def test_model_invariants(X, C, seed):
    m = kmeans_fit(X, C, seed=seed)
    # no empty cluster, every point at its nearest center (ties to the lower index)
    assert set(m.assignments.tolist()) == set(range(m.n_clusters))
    d = ((X[:, None, :] - m.centers[None]) ** 2).sum(-1)
    assert np.array_equal(m.assignments, d.argmin(1))
    assert np.all(np.diff(m.history) <= 1e-9 * (1 + np.abs(m.history[:-1])))


@given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 2)),
              elements=st.floats(-10, 10, allow_nan=False).map(lambda x: round(x, 2))),
       st.integers(1, 2))
@example(np.array([[0.0, -5.0]] + [[0.0, 0.0]] * 5 + [[5.0, -1.0]]), 2)
@example(np.array([[0.12], [-1.14], [2.29], [7.94], [-5.66], [2.37], [6.97]]), 2)
def test_small_instances_reach_optimum(X, C):
    assert kmeans_fit(X, C, seed=0).inertia == pytest.approx(brute_inertia(X, C), abs=1e-9)


def test_nearest_centers_order_and_ties():
    centers = np.array([[-1.0], [2.0], [0.5]])
    assert nearest_centers(np.array([0.0]), centers, 2) == [2, 0]
    assert nearest_centers(np.array([0.0]), np.array([[1.0], [-1.0]]), 2) == [0, 1]
    assert nearest_centers(np.array([1.9]), centers, 1) == [1]


def test_nearest_centers_k_out_of_range():
    with pytest.raises(DataError):
        nearest_centers(np.array([0.0]), np.array([[1.0]]), 2)
    with pytest.raises(DataError):
        nearest_centers(np.array([0.0]), np.array([[1.0]]), 0)
