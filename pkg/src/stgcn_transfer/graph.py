"""Functional-connectivity graphs and weighted nodal statistics."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

# relative tolerance for treating two path lengths as tied
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ConnectivityGraph:
    """Weighted undirected graph with its renormalized propagation matrix.

    ``adjacency`` holds |Pearson r| between node series (zero diagonal);
    ``normalized`` is ``D^-1/2 (A + I) D^-1/2`` with ``D_ii = sum_j A_ij + 1``.
    """

    adjacency: np.ndarray
    normalized: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_adjacency(cls, adjacency) -> "ConnectivityGraph":
        A = np.array(adjacency, dtype=np.float64)
        return cls(adjacency=A, normalized=normalize_adjacency(A))


def _check_square(A: np.ndarray, name: str = "adjacency") -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")


def normalize_adjacency(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    _check_square(A)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12):
        raise ValueError("adjacency must be symmetric")
    if np.any(A < 0):
        raise ValueError("adjacency must be nonnegative")
    A_hat = A + np.eye(A.shape[0])
    d = A_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return A_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def pearson_connectivity(series) -> ConnectivityGraph:
    """Graph whose edge weights are absolute Pearson correlations between rows."""
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"series must be a nodes x time matrix, got shape {X.shape}")
    if X.shape[1] < 3:
        raise ValueError(f"need at least 3 time points, got {X.shape[1]}")
    centered = X - X.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    flat = np.flatnonzero(norms <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=1)))
    if flat.size:
        raise ValueError(f"node {int(flat[0])} has zero variance")
    Z = centered / norms[:, None]
    A = np.abs(np.clip(Z @ Z.T, -1.0, 1.0))
    A = (A + A.T) / 2
    np.fill_diagonal(A, 0.0)
    return ConnectivityGraph.from_adjacency(A)


# ------------------------------------------------------------------ metrics


def _validate_weights(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    _check_square(A)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12):
        raise ValueError("adjacency must be symmetric")
    if np.any(A < 0):
        raise ValueError("adjacency must be nonnegative")
    if np.any(np.diag(A) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    return A


def _less(a: float, b: float) -> bool:
    return a < b - _TIE_RTOL * max(abs(a), abs(b))


def _tied(a: float, b: float) -> bool:
    return abs(a - b) <= _TIE_RTOL * max(abs(a), abs(b))


def _single_source(L: np.ndarray, s: int):
    """Dijkstra from ``s`` with shortest-path counting (edge lengths ``L``)."""
    n = L.shape[0]
    dist = np.full(n, np.inf)
    sigma = np.zeros(n)
    preds: list[list[int]] = [[] for _ in range(n)]
    dist[s] = 0.0
    sigma[s] = 1.0
    order: list[int] = []
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, s)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v] or d > dist[v]:
            continue
        done[v] = True
        order.append(v)
        for w in np.flatnonzero(np.isfinite(L[v])):
            if done[w]:
                continue
            cand = d + L[v, w]
            if not np.isfinite(dist[w]) or _less(cand, dist[w]):
                dist[w] = cand
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (cand, w))
            elif _tied(cand, dist[w]):
                sigma[w] += sigma[v]
                preds[w].append(v)
    return dist, sigma, preds, order


def _lengths(A: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        L = np.where(A > 0, 1.0 / A, np.inf)
    np.fill_diagonal(L, np.inf)
    return L


def betweenness_centrality(A) -> np.ndarray:
    """Brandes betweenness on lengths ``1/w``, counting each unordered pair once."""
    A = _validate_weights(A)
    L = _lengths(A)
    n = A.shape[0]
    bc = np.zeros(n)
    for s in range(n):
        _, sigma, preds, order = _single_source(L, s)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc / 2.0


def shortest_path_lengths(A) -> np.ndarray:
    """All-pairs weighted shortest path lengths on ``1/w`` (inf if unreachable)."""
    A = _validate_weights(A)
    L = _lengths(A)
    return np.vstack([_single_source(L, s)[0] for s in range(A.shape[0])])


def nodal_efficiency(A) -> np.ndarray:
    A = _validate_weights(A)
    n = A.shape[0]
    if n < 2:
        return np.zeros(n)
    D = shortest_path_lengths(A)
    with np.errstate(divide="ignore"):
        inv = np.where(np.isfinite(D) & (D > 0), 1.0 / D, 0.0)
    np.fill_diagonal(inv, 0.0)
    return inv.sum(axis=1) / (n - 1)


def clustering_coefficient(A) -> np.ndarray:
    """Onnela weighted clustering with weights scaled by the maximum weight."""
    A = _validate_weights(A)
    wmax = A.max() if A.size else 0.0
    if wmax == 0:
        return np.zeros(A.shape[0])
    W = np.cbrt(A / wmax)
    cycles = np.diag(W @ W @ W)
    k = (A > 0).sum(axis=1)
    denom = k * (k - 1)
    return np.where(denom > 0, cycles / np.where(denom > 0, denom, 1), 0.0)


def node_strength(A) -> np.ndarray:
    return _validate_weights(A).sum(axis=1)


def nodal_properties(A) -> dict[str, np.ndarray]:
    """Strength, clustering, betweenness and nodal efficiency of a weighted graph."""
    A = _validate_weights(A)
    return {
        "strength": node_strength(A),
        "clustering": clustering_coefficient(A),
        "betweenness": betweenness_centrality(A),
        "efficiency": nodal_efficiency(A),
    }


PROPERTY_NAMES = ("strength", "clustering", "betweenness", "efficiency")
