"""Clustering agreement metrics: adjusted Rand index and normalized mutual
information (arithmetic-mean normalization, natural logs)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (r, c) int64
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    total: int


def _as_label_array(labels) -> np.ndarray:
    arr = getattr(labels, "labels", labels)
    return np.asarray(arr, dtype=np.int64)


def contingency_table(a, b) -> ContingencyTable:
    a = _as_label_array(a)
    b = _as_label_array(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must be 1-D and of equal length")
    _, a_idx = np.unique(a, return_inverse=True)
    _, b_idx = np.unique(b, return_inverse=True)
    counts = np.zeros((a_idx.max() + 1, b_idx.max() + 1), dtype=np.int64)
    np.add.at(counts, (a_idx, b_idx), 1)
    return ContingencyTable(
        counts=counts,
        row_marginals=counts.sum(axis=1),
        col_marginals=counts.sum(axis=0),
        total=int(a.shape[0]),
    )


def _pairs(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) // 2


def ari(a, b) -> float:
    """Chance-corrected pair agreement in [-1, 1].

    Degenerate cases where the correction denominator vanishes (both labelings
    a single cluster, or both all singletons) score 1.
    """
    table = contingency_table(a, b)
    if table.total < 2:
        raise ValueError("ARI requires at least 2 items")
    sum_ij = float(_pairs(table.counts).sum())
    sum_a = float(_pairs(table.row_marginals).sum())
    sum_b = float(_pairs(table.col_marginals).sum())
    n_pairs = float(_pairs(np.int64(table.total)))
    expected = sum_a * sum_b / n_pairs
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def _entropy(marginals: np.ndarray, total: int) -> float:
    p = marginals[marginals > 0] / total
    # canonical summation order: relabeling permutes the terms, and sorting
    # them makes the float sum (hence the metric) exactly permutation-invariant
    return float(-np.sum(np.sort(p * np.log(p))))


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the marginal entropies."""
    table = contingency_table(a, b)
    h_a = _entropy(table.row_marginals, table.total)
    h_b = _entropy(table.col_marginals, table.total)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    n = table.total
    nz = table.counts > 0
    joint = table.counts[nz] / n
    outer = (
        table.row_marginals[:, None] * table.col_marginals[None, :]
    )[nz] / (n * n)
    mi = float(np.sum(np.sort(joint * np.log(joint / outer))))
    mi = max(mi, 0.0)
    return min(mi / (0.5 * (h_a + h_b)), 1.0)


def write_report_csv(values: dict[str, float], path: str) -> None:
    from .fileio import atomic_write_text, format_float

    lines = ["metric,value"]
    for name, value in values.items():
        lines.append(f"{name},{format_float(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
