"""Full-graph training loop.

Each epoch draws a fresh corruption permutation, runs the original and
corrupted passes, backpropagates the weighted loss, and takes one Adam step.
Everything is driven by a single PCG64 stream seeded from the config, so a
given (data, config) pair reproduces its history and parameters bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainError
from .fileio import atomic_write_text, format_float
from .graph import (
    CorruptionPlan,
    SpatialGraph,
    community_matrix,
    knn_graph,
    normalize_adjacency,
)
from .ingest import CoordinateSet, ExpressionMatrix, FeatureMatrix
from .mpga import (
    LossWeights,
    ModelInputs,
    MpgaModel,
    backward,
    forward,
)
from .preprocess import PcaBasis, fit_pca, normalize_expression, select_hvg
from .tensor_core import AdamConfig, adam_step

DEFAULT_HIDDEN_DIMS = (512, 64)


@dataclass
class TrainConfig:
    """All knobs of one run; defaults follow the reference pipeline settings."""

    n_clusters: int
    epochs: int = 600
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS
    pca_dim: int = 50
    k_neighbors: int = 3
    m_keep: int = 3000
    loss_weights: LossWeights = field(default_factory=LossWeights)
    use_image_modality: bool = True
    use_contrastive: bool = True
    use_smoothing: bool = True
    b_smooth: int = 50
    normalize: bool = True
    # pre-clustering reduction of the reconstruction: None = automatic
    # (n_clusters - 1, capped at 20), 0 = off, >0 = explicit dimension
    gmm_pca_dim: int | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be nonempty")
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if self.k_neighbors < 1 or self.m_keep < 1 or self.pca_dim < 1:
            raise ValueError("k_neighbors, m_keep and pca_dim must be >= 1")
        if self.b_smooth < 1:
            raise ValueError("b_smooth must be >= 1")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)


@dataclass
class TrainHistory:
    """Per-epoch loss terms and fusion weights."""

    l_rec: list[float] = field(default_factory=list)
    l_cl: list[float] = field(default_factory=list)
    l_cl_c: list[float] = field(default_factory=list)
    l_total: list[float] = field(default_factory=list)
    alphas: list[tuple[float, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.l_total)

    def write_csv(self, path: str) -> None:
        n_alpha = len(self.alphas[0]) if self.alphas else 0
        header = "epoch,l_rec,l_cl,l_cl_c,l_total," + ",".join(
            f"alpha_{l + 1}" for l in range(n_alpha)
        )
        lines = [header.rstrip(",")]
        for e in range(len(self)):
            cells = [
                str(e + 1),
                format_float(self.l_rec[e]),
                format_float(self.l_cl[e]),
                format_float(self.l_cl_c[e]),
                format_float(self.l_total[e]),
            ] + [format_float(a) for a in self.alphas[e]]
            lines.append(",".join(cells))
        atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class PreparedInputs:
    """Preprocessing products shared by training and clustering."""

    inputs: ModelInputs
    hvg: ExpressionMatrix  # normalized, variance-ranked expression (the target)
    proximity: SpatialGraph
    similarity: SpatialGraph
    pca: PcaBasis


@dataclass
class TrainResult:
    model: MpgaModel
    reconstruction: np.ndarray  # final clean-pass decoder output, N x m_keep
    history: TrainHistory
    prepared: PreparedInputs


def _check_alignment(
    expr: ExpressionMatrix,
    feats: FeatureMatrix | None,
    coords: CoordinateSet,
) -> None:
    if coords.spot_ids != expr.spot_ids:
        raise TrainError("coordinates are not aligned to the expression matrix")
    if feats is not None and feats.spot_ids != expr.spot_ids:
        raise TrainError("features are not aligned to the expression matrix")


def prepare_inputs(
    expr: ExpressionMatrix,
    feats: FeatureMatrix | None,
    coords: CoordinateSet,
    cfg: TrainConfig,
) -> PreparedInputs:
    """Normalize, rank genes, build both graphs, and assemble branch inputs.

    With the image modality disabled the second branch receives the expression
    matrix itself, still convolved over the similarity graph, which keeps the
    architecture (and the fusion weights) intact for the ablation.
    """
    _check_alignment(expr, feats, coords)
    processed = normalize_expression(expr) if cfg.normalize else expr
    hvg = select_hvg(processed, cfg.m_keep)
    x_gene = hvg.values

    n, m = x_gene.shape
    d = min(cfg.pca_dim, n, m)
    pca = fit_pca(x_gene, d)
    scores = pca.project(x_gene)

    proximity = normalize_adjacency(
        knn_graph(coords.coords, cfg.k_neighbors, "proximity")
    )
    similarity = normalize_adjacency(knn_graph(scores, cfg.k_neighbors, "similarity"))

    if cfg.use_image_modality:
        if feats is None:
            raise TrainError(
                "image modality is enabled but no feature matrix was provided"
            )
        x_image = feats.values
    else:
        x_image = x_gene

    assert proximity.normalized_adjacency is not None
    assert similarity.normalized_adjacency is not None
    inputs = ModelInputs(
        x_gene=x_gene,
        x_image=x_image,
        a_gene=proximity.normalized_adjacency,
        a_image=similarity.normalized_adjacency,
        c_gene=community_matrix(proximity),
        c_image=community_matrix(similarity),
    )
    return PreparedInputs(inputs, hvg, proximity, similarity, pca)


def train(
    expr: ExpressionMatrix,
    feats: FeatureMatrix | None,
    coords: CoordinateSet,
    cfg: TrainConfig,
) -> TrainResult:
    """Train the autoencoder and return the final clean-pass reconstruction."""
    prepared = prepare_inputs(expr, feats, coords, cfg)
    inputs = prepared.inputs
    n = inputs.x_gene.shape[0]

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = MpgaModel.create(
        in_gene=inputs.x_gene.shape[1],
        in_image=inputs.x_image.shape[1],
        hidden_dims=list(cfg.hidden_dims),
        rng=rng,
    )
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    history = TrainHistory()

    for epoch in range(1, cfg.epochs + 1):
        plan = None
        if cfg.use_contrastive:
            plan = CorruptionPlan.from_seed(int(rng.integers(2**63)), n)
        state = forward(
            model, inputs, plan, cfg.loss_weights, use_contrastive=cfg.use_contrastive
        )
        if not math.isfinite(state.l_total):
            raise TrainError(f"total loss diverged to non-finite at epoch {epoch}")
        history.l_rec.append(state.l_rec)
        history.l_cl.append(state.l_cl)
        history.l_cl_c.append(state.l_cl_c)
        history.l_total.append(state.l_total)
        history.alphas.append(tuple(float(a) for a in model.alphas()))
        backward(model, inputs, state, cfg.loss_weights)
        adam_step(model.params(), adam)

    final = forward(model, inputs, None, cfg.loss_weights, use_contrastive=False)
    return TrainResult(model, final.x_rec, history, prepared)
