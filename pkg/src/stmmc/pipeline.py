"""Glue from trained reconstruction to final labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clusterer import GmmModel, LabelVector, gmm_cluster, smooth_labels
from .ingest import CoordinateSet, ExpressionMatrix, FeatureMatrix
from .preprocess import fit_pca
from .trainer import TrainConfig, TrainResult, train


@dataclass
class PipelineResult:
    train_result: TrainResult
    labels_raw: LabelVector
    labels: LabelVector  # after optional smoothing
    gmm: GmmModel


def cluster_reconstruction(
    reconstruction: np.ndarray, cfg: TrainConfig
) -> tuple[LabelVector, GmmModel]:
    """GMM on the (optionally PCA-reduced) reconstructed expression.

    The automatic reduction keeps n_clusters - 1 principal axes (capped at
    20): k cluster centroids span at most a (k-1)-dimensional subspace, and
    trailing near-zero-variance axes of the reconstruction otherwise dominate
    a full-covariance likelihood.
    """
    x = reconstruction
    dim = cfg.gmm_pca_dim
    if dim is None:
        dim = min(cfg.n_clusters - 1, 20)
    if dim:
        d = max(min(dim, x.shape[0], x.shape[1]), 1)
        if d < x.shape[1]:
            x = fit_pca(x, d).project(x)
    return gmm_cluster(x, cfg.n_clusters, seed=cfg.seed)


def run_pipeline(
    expr: ExpressionMatrix,
    feats: FeatureMatrix | None,
    coords: CoordinateSet,
    cfg: TrainConfig,
) -> PipelineResult:
    """Train, cluster the reconstruction, and optionally smooth the labels."""
    tr = train(expr, feats, coords, cfg)
    labels_raw, gmm = cluster_reconstruction(tr.reconstruction, cfg)
    labels = labels_raw
    if cfg.use_smoothing:
        labels = smooth_labels(labels_raw, coords, cfg.b_smooth)
    return PipelineResult(tr, labels_raw, labels, gmm)
