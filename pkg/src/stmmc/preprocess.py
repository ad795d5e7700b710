"""Expression preprocessing: HVG selection, normalization, PCA.

Gene variance for HVG ranking is computed on whatever matrix is passed in; the
pipeline normalizes first so sequencing depth does not dominate the ranking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .ingest import ExpressionMatrix

NORMALIZE_TARGET_SUM = 10_000.0


def select_hvg(expr: ExpressionMatrix, m_keep: int) -> ExpressionMatrix:
    """Keep the ``m_keep`` genes with the largest sample variance.

    Output columns are ordered by descending variance; ties keep the original
    gene order.  ``m_keep`` larger than the gene count clamps with a warning.
    """
    if m_keep < 1:
        raise ValueError("m_keep must be >= 1")
    n, m = expr.values.shape
    if m_keep > m:
        warnings.warn(
            f"m_keep={m_keep} exceeds the {m} available genes; keeping all",
            stacklevel=2,
        )
        m_keep = m
    if n > 1:
        variances = expr.values.var(axis=0, ddof=1)
    else:
        variances = np.zeros(m)
    # stable sort on the negated variances: ties resolve to the lower column index
    order = np.argsort(-variances, kind="stable")[:m_keep]
    return ExpressionMatrix(
        expr.values[:, order],
        list(expr.spot_ids),
        [expr.gene_ids[j] for j in order],
    )


def normalize_expression(
    expr: ExpressionMatrix, target_sum: float = NORMALIZE_TARGET_SUM
) -> ExpressionMatrix:
    """Scale each spot to ``target_sum`` total counts, then apply log(1 + v)."""
    sums = expr.values.sum(axis=1)
    zero = np.where(sums <= 0)[0]
    if zero.size:
        raise DataFormatError(
            f"spot {expr.spot_ids[zero[0]]!r} has zero total expression; "
            "cannot normalize"
        )
    scaled = expr.values * (target_sum / sums)[:, None]
    return ExpressionMatrix(np.log1p(scaled), list(expr.spot_ids), list(expr.gene_ids))


@dataclass
class PcaBasis:
    """Principal axes of a column-centered data matrix."""

    components: np.ndarray  # (d, M), orthonormal rows
    means: np.ndarray  # (M,)
    explained_variance: np.ndarray  # (d,), nonincreasing

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) @ self.components.T

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.components + self.means


def fit_pca(x: np.ndarray, d: int) -> PcaBasis:
    """Top-``d`` principal axes of ``x`` via SVD of the centered matrix.

    ``d`` may exceed the rank of the data; the trailing explained variances are
    then (numerically) zero.  Component signs are fixed so the entry of largest
    magnitude in each row is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be a 2-D matrix")
    n, m = x.shape
    if not (1 <= d <= min(n, m)):
        raise ValueError(f"d must be in [1, min(N, M)] = [1, {min(n, m)}], got {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    means = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - means, full_matrices=False)
    components = vt[:d].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    explained = s[:d] ** 2 / max(n - 1, 1)
    return PcaBasis(components, means, explained)
