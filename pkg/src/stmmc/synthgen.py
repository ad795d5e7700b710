"""Seeded synthetic datasets with planted spatial domains.

Spots sit on a rows x cols lattice.  Domains grow outward from seeded centers
by a lattice Dijkstra ordered on Euclidean distance to each center, which
approximates Voronoi cells while guaranteeing that every domain stays
4-connected (a plain digitized Voronoi assignment can split cells).  Each
domain elevates its own disjoint block of marker genes; image features are
per-domain mean vectors (scaled by ``image_signal``) plus unit Gaussian noise.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .clusterer import LabelVector
from .ingest import CoordinateSet, ExpressionMatrix, FeatureMatrix


@dataclass
class SynthSpec:
    rows: int = 20
    cols: int = 20
    n_domains: int = 4
    n_genes: int = 60
    signature_strength: float = 1.0  # mean shift on a domain's marker block
    noise_sd: float = 0.5
    image_dim: int = 12
    image_signal: float = 2.0  # separation of domain means in feature space
    seed: int = 7

    def __post_init__(self) -> None:
        if min(self.rows, self.cols, self.n_domains, self.n_genes, self.image_dim) < 1:
            raise ValueError("all counts must be >= 1")
        if self.rows * self.cols < self.n_domains:
            raise ValueError("need at least one lattice spot per domain")
        if self.n_genes < self.n_domains:
            raise ValueError("need at least one marker gene per domain")
        if self.noise_sd < 0 or self.signature_strength < 0 or self.image_signal < 0:
            raise ValueError("strengths and noise must be nonnegative")


def _pick_centers(
    rows: int, cols: int, n_domains: int, rng: np.random.Generator
) -> np.ndarray:
    """Seeded farthest-point sampling of domain centers on the lattice.

    The first center is drawn uniformly; each further center is the cell
    maximizing its distance to all chosen centers (ties to the lowest cell
    index).  Spread-out centers keep the grown domains comparably sized, so
    small domains do not vanish under the default smoothing neighborhood.
    """
    grid = np.stack(
        np.divmod(np.arange(rows * cols), cols), axis=1
    ).astype(np.float64)
    first = int(rng.integers(rows * cols))
    chosen = [first]
    min_d2 = np.sum((grid - grid[first]) ** 2, axis=1)
    for _ in range(1, n_domains):
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((grid - grid[nxt]) ** 2, axis=1))
    return grid[chosen].astype(np.int64)


def _grow_domains(
    rows: int, cols: int, centers: np.ndarray
) -> np.ndarray:
    """Assign every lattice cell to a domain via multi-source lattice Dijkstra.

    Cells are claimed in order of (Euclidean distance to the claiming domain's
    center, domain index, row, col); a domain can only claim cells adjacent to
    territory it already holds, so each domain is 4-connected by construction.
    """
    assignment = np.full((rows, cols), -1, dtype=np.int64)
    heap: list[tuple[float, int, int, int]] = []
    for dom, (r, c) in enumerate(centers):
        heapq.heappush(heap, (0.0, dom, int(r), int(c)))
    while heap:
        _, dom, r, c = heapq.heappop(heap)
        if assignment[r, c] != -1:
            continue
        assignment[r, c] = dom
        cr, cc = centers[dom]
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < rows and 0 <= nc < cols and assignment[nr, nc] == -1:
                dist = float(np.hypot(nr - cr, nc - cc))
                heapq.heappush(heap, (dist, dom, nr, nc))
    return assignment.ravel()


def generate(
    spec: SynthSpec,
) -> tuple[ExpressionMatrix, CoordinateSet, FeatureMatrix, LabelVector]:
    """Deterministic draw of (expression, coordinates, features, true labels)."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.rows * spec.cols

    centers = _pick_centers(spec.rows, spec.cols, spec.n_domains, rng)
    domains = _grow_domains(spec.rows, spec.cols, centers)

    # disjoint marker blocks of equal size; leftover genes carry no signature
    block = spec.n_genes // spec.n_domains
    means = np.ones((n, spec.n_genes))
    for dom in range(spec.n_domains):
        rows_in = domains == dom
        means[np.ix_(rows_in, np.arange(dom * block, (dom + 1) * block))] += (
            spec.signature_strength
        )
    expression = np.clip(
        means + rng.normal(0.0, spec.noise_sd, size=(n, spec.n_genes)), 0.0, None
    )

    domain_feature_means = spec.image_signal * rng.standard_normal(
        (spec.n_domains, spec.image_dim)
    )
    features = domain_feature_means[domains] + rng.standard_normal(
        (n, spec.image_dim)
    )

    spot_ids = [f"spot_{i:04d}" for i in range(n)]
    grid_r, grid_c = np.divmod(np.arange(n), spec.cols)
    coords = np.stack([grid_c.astype(np.float64), grid_r.astype(np.float64)], axis=1)
    gene_ids = [f"gene_{j:04d}" for j in range(spec.n_genes)]

    expr = ExpressionMatrix(expression, spot_ids, gene_ids)
    coord_set = CoordinateSet(coords, list(spot_ids))
    feats = FeatureMatrix(features, list(spot_ids), source="precomputed")
    labels = LabelVector(domains, spec.n_domains)
    return expr, coord_set, feats, labels
