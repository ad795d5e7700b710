"""KNN graphs over spots, adjacency normalization, corruption, communities.

Two graphs drive the model: a proximity graph built from spot coordinates
(used by the expression branch) and a similarity graph built from PCA-reduced
expression (used by the image branch).  Both are union-symmetrized KNN graphs
with deterministic lower-index tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .fileio import atomic_write_text

GraphKind = Literal["proximity", "similarity"]


@dataclass
class SpatialGraph:
    """Undirected graph over the N spots of a slice."""

    n_nodes: int
    edges: frozenset[tuple[int, int]]  # pairs (i, j) with i < j
    adjacency: np.ndarray  # (N, N) 0/1 symmetric, zero diagonal
    kind: GraphKind
    normalized_adjacency: np.ndarray | None = None

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    """Dense squared Euclidean distances via the |a|^2 + |b|^2 - 2ab expansion.

    Keeps memory at N^2 regardless of the point dimension; tiny negative
    round-off is clamped to zero.
    """
    sq = np.einsum("ij,ij->i", points, points)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def knn_graph(points: np.ndarray, k: int, kind: GraphKind = "proximity") -> SpatialGraph:
    """Union-symmetrized K-nearest-neighbor graph by Euclidean distance.

    Each node contributes edges to its ``k`` nearest other nodes; distance ties
    break toward the lower node index.  An edge exists when either endpoint
    selected it, so every node ends with degree >= k.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be an Nxp matrix")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    n = points.shape[0]
    if n <= k:
        raise ValueError(f"need more points than neighbors: N={n}, K={k}")
    d2 = pairwise_sq_dists(points)
    np.fill_diagonal(d2, np.inf)
    # stable argsort: equal distances keep ascending index order
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    adjacency = np.zeros((n, n), dtype=np.float64)
    rows = np.repeat(np.arange(n), k)
    adjacency[rows, nearest.ravel()] = 1.0
    adjacency = np.maximum(adjacency, adjacency.T)
    ii, jj = np.nonzero(np.triu(adjacency, 1))
    edges = frozenset(zip(ii.tolist(), jj.tolist()))
    return SpatialGraph(n_nodes=n, edges=edges, adjacency=adjacency, kind=kind)


def normalize_adjacency(g: SpatialGraph) -> SpatialGraph:
    """Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2}."""
    a_hat = g.adjacency + np.eye(g.n_nodes)
    inv_sqrt_deg = 1.0 / np.sqrt(a_hat.sum(axis=1))
    normalized = a_hat * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]
    return replace(g, normalized_adjacency=normalized)


@dataclass
class CorruptionPlan:
    """A seeded node permutation used to build negative contrastive samples."""

    permutation: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        perm = np.asarray(self.permutation, dtype=np.int64)
        n = perm.shape[0]
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("permutation is not a bijection on 0..N-1")
        self.permutation = perm

    @classmethod
    def from_seed(cls, seed: int, n: int) -> "CorruptionPlan":
        """Fisher-Yates shuffle driven by a PCG64 stream."""
        rng = np.random.Generator(np.random.PCG64(seed))
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return cls(perm, seed)

    def inverse(self) -> "CorruptionPlan":
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.permutation.shape[0])
        return CorruptionPlan(inv, self.seed)


def corrupt_features(x: np.ndarray, plan: CorruptionPlan) -> np.ndarray:
    """Row-shuffle node features (row i of the output is row perm[i] of x)."""
    x = np.asarray(x)
    if x.shape[0] != plan.permutation.shape[0]:
        raise ValueError("permutation length does not match the number of rows")
    return x[plan.permutation]


def community_matrix(g: SpatialGraph) -> np.ndarray:
    """Row-stochastic neighbor-averaging operator (self excluded).

    Row i averages over i's one-step neighbors; isolated nodes fall back to
    their own embedding (identity row).
    """
    deg = g.adjacency.sum(axis=1)
    c = np.zeros_like(g.adjacency)
    nonzero = deg > 0
    c[nonzero] = g.adjacency[nonzero] / deg[nonzero, None]
    isolated = np.where(~nonzero)[0]
    c[isolated, isolated] = 1.0
    return c


def community_representation(z: np.ndarray, g: SpatialGraph) -> np.ndarray:
    """Mean embedding of each node's one-step neighbors."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != g.n_nodes:
        raise ValueError("embedding row count does not match the graph")
    return community_matrix(g) @ z


def write_edge_list(g: SpatialGraph, path: str) -> None:
    lines = ["i,j"] + [f"{i},{j}" for i, j in sorted(g.edges)]
    atomic_write_text(path, "\n".join(lines) + "\n")
