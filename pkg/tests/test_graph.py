import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgcn_transfer.graph import (
    ConnectivityGraph,
    nodal_properties,
    normalize_adjacency,
    pearson_connectivity,
)


# ---------------------------------------------------------------- brute-force oracle


def _simple_paths(A, s, t):
    n = A.shape[0]
    stack = [(s, [s])]
    while stack:
        v, path = stack.pop()
        if v == t:
            yield path
            continue
        for w in range(n):
            if A[v, w] > 0 and w not in path:
                stack.append((w, path + [w]))


def oracle_properties(A):
    """Nodal statistics by enumerating every simple path and every node triple."""
    n = A.shape[0]
    strength = A.sum(axis=1)
    bet = np.zeros(n)
    eff = np.zeros(n)
    for s, t in itertools.combinations(range(n), 2):
        paths = list(_simple_paths(A, s, t))
        if not paths:
            continue
        lengths = [sum(1.0 / A[p[i], p[i + 1]] for i in range(len(p) - 1)) for p in paths]
        best = min(lengths)
        shortest = [p for p, d in zip(paths, lengths) if abs(d - best) <= 1e-12 * best]
        for p in shortest:
            for v in p[1:-1]:
                bet[v] += 1.0 / len(shortest)
        eff[s] += 1.0 / best
        eff[t] += 1.0 / best
    eff = eff / (n - 1) if n > 1 else eff
    wmax = A.max()
    clus = np.zeros(n)
    if wmax > 0:
        W = A / wmax
        for i in range(n):
            k = np.count_nonzero(A[i])
            if k < 2:
                continue
            total = 0.0
            for j in range(n):
                for h in range(n):
                    if j != h and j != i and h != i:
                        total += (W[i, j] * W[i, h] * W[j, h]) ** (1 / 3)
            clus[i] = total / (k * (k - 1))
    return {"strength": strength, "clustering": clus, "betweenness": bet, "efficiency": eff}


def random_connected_graph(rng, n):
    while True:
        density = rng.uniform(0.3, 1.0)
        mask = np.triu(rng.random((n, n)) < density, 1)
        W = np.where(mask, rng.uniform(0.05, 1.0, size=(n, n)), 0.0)
        A = W + W.T
        reach = np.linalg.matrix_power(A + np.eye(n) > 0, n).astype(bool) if n > 1 else np.ones((1, 1), bool)
        if reach.all():
            return A


# ---------------------------------------------------------------- normalization


def test_normalize_zero_matrix_is_identity():
    np.testing.assert_array_equal(normalize_adjacency(np.zeros((4, 4))), np.eye(4))


def test_normalize_two_node_unit_edge():
    np.testing.assert_allclose(normalize_adjacency([[0, 1], [1, 0]]), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_normalize_two_node_half_edge():
    np.testing.assert_allclose(normalize_adjacency([[0, 0.5], [0.5, 0]]), [[2 / 3, 1 / 3], [1 / 3, 2 / 3]],
                               atol=1e-15)


@pytest.mark.parametrize("A", [[[0, 1], [0, 0]], [[0, -1], [-1, 0]]])
def test_normalize_rejects_bad_input(A):
    with pytest.raises(ValueError):
        normalize_adjacency(A)


def _power_iteration_radius(M, iters=500):
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        lam = np.linalg.norm(w)
        if lam == 0:
            return 0.0
        v = w / lam
    return lam


def test_normalized_spectral_radius_at_most_one():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 23))
        W = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
        A = np.triu(W, 1) + np.triu(W, 1).T
        N = normalize_adjacency(A)
        np.testing.assert_allclose(N, N.T, atol=1e-12)
        assert _power_iteration_radius(N) <= 1 + 1e-9
        assert np.abs(np.linalg.eigvalsh(N)).max() <= 1 + 1e-9


# ---------------------------------------------------------------- connectivity


def test_pearson_affine_rows_fully_connected():
    x = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    g = pearson_connectivity(np.vstack([x, 2 * x]))
    np.testing.assert_allclose(g.adjacency, [[0, 1], [1, 0]], atol=1e-12)
    g = pearson_connectivity(np.vstack([x, -x]))
    assert g.adjacency[0, 1] == pytest.approx(1.0)


def test_pearson_independent_rows_weak():
    X = np.random.default_rng(12345).standard_normal((2, 1000))
    a, b = X[0] - X[0].mean(), X[1] - X[1].mean()
    direct = abs(a @ b) / np.sqrt((a @ a) * (b @ b))
    g = pearson_connectivity(X)
    assert g.adjacency[0, 1] == pytest.approx(direct, abs=1e-12)
    assert g.adjacency[0, 1] < 0.1


def test_pearson_matches_numpy_and_invariants():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 50))
    g = pearson_connectivity(X)
    expected = np.abs(np.corrcoef(X))
    np.fill_diagonal(expected, 0)
    np.testing.assert_allclose(g.adjacency, expected, atol=1e-12)
    assert g.num_nodes == 6
    assert np.all((g.adjacency >= 0) & (g.adjacency <= 1))
    assert np.all(np.abs(np.linalg.eigvalsh(g.normalized)) <= 1 + 1e-12)


def test_pearson_zero_variance_names_node():
    X = np.vstack([np.arange(5.0), np.ones(5), np.arange(5.0) ** 2])
    with pytest.raises(ValueError, match="node 1"):
        pearson_connectivity(X)


def test_pearson_too_short():
    with pytest.raises(ValueError):
        pearson_connectivity(np.ones((2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0.1, 10), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_pearson_invariant_to_positive_affine_rescaling(seed, slopes, offsets):
    X = np.random.default_rng(seed).standard_normal((4, 30))
    Y = X * np.array(slopes)[:, None] + np.array(offsets)[:, None]
    np.testing.assert_allclose(pearson_connectivity(X).adjacency, pearson_connectivity(Y).adjacency, atol=1e-10)


def test_connectivity_graph_from_adjacency():
    g = ConnectivityGraph.from_adjacency([[0, 1], [1, 0]])
    np.testing.assert_allclose(g.normalized, 0.5)


# ---------------------------------------------------------------- nodal properties


def test_unit_triangle():
    A = np.ones((3, 3)) - np.eye(3)
    p = nodal_properties(A)
    np.testing.assert_allclose(p["strength"], [2, 2, 2])
    np.testing.assert_allclose(p["clustering"], [1, 1, 1])
    np.testing.assert_allclose(p["betweenness"], [0, 0, 0])
    np.testing.assert_allclose(p["efficiency"], [1, 1, 1])


def test_unit_path():
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    p = nodal_properties(A)
    np.testing.assert_allclose(p["betweenness"], [0, 1, 0])
    np.testing.assert_allclose(p["strength"], [1, 2, 1])


def test_empty_graph_all_zero():
    p = nodal_properties(np.zeros((4, 4)))
    for values in p.values():
        np.testing.assert_array_equal(values, np.zeros(4))


def test_ties_split_credit():
    # square 0-1-2-3-0: two equal shortest routes between opposite corners
    A = np.zeros((4, 4))
    for i in range(4):
        A[i, (i + 1) % 4] = A[(i + 1) % 4, i] = 1.0
    np.testing.assert_allclose(nodal_properties(A)["betweenness"], [0.5] * 4)


def test_matches_bruteforce_oracle_on_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(120):
        n = int(rng.integers(2, 7))
        A = random_connected_graph(rng, n)
        got, want = nodal_properties(A), oracle_properties(A)
        for name in want:
            np.testing.assert_allclose(got[name], want[name], rtol=1e-12, atol=1e-12, err_msg=name)


def test_rejects_nonzero_diagonal():
    with pytest.raises(ValueError):
        nodal_properties(np.eye(3))
