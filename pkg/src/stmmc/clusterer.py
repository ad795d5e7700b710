"""Gaussian-mixture clustering of the reconstructed expression, plus the
b-nearest-neighbor majority smoothing pass.

The mixture is fit by seeded EM with k-means++ initialization and a fixed
1e-6 ridge on every covariance; the cluster count is always supplied by the
caller (no model selection).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterError, DataFormatError
from .fileio import atomic_write_text
from .graph import pairwise_sq_dists
from .ingest import CoordinateSet

COV_REGULARIZATION = 1e-6
EM_TOL = 1e-6
EM_MAX_ITER = 300


@dataclass
class LabelVector:
    """Length-N integer cluster assignment with cluster count k."""

    labels: np.ndarray
    k: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be a 1-D vector")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError("labels must lie in [0, k)")

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass
class GmmModel:
    means: np.ndarray  # (k, d)
    covariances: np.ndarray  # (k, d, d)
    weights: np.ndarray  # (k,), nonnegative, sums to 1
    log_likelihood: list[float] = field(default_factory=list)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:  # all remaining points coincide with a chosen center
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _log_gaussian(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    chol = np.linalg.cholesky(cov)
    y = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(y * y, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + maha)


def _sq_dists_to_means(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - means[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1)
    return peak + np.log(np.sum(np.exp(a - peak[:, None]), axis=1))


def gmm_cluster(
    x: np.ndarray, k: int, seed: int, n_init: int = 5
) -> tuple[LabelVector, GmmModel]:
    """Fit a full-covariance Gaussian mixture by EM; labels by max responsibility.

    Runs ``n_init`` independently seeded EM fits (child seeds derived from
    ``seed``) and keeps the one with the highest final log-likelihood, which
    takes the sting out of unlucky k-means++ starts.  Deterministic given
    ``seed``.
    """
    best: tuple[LabelVector, GmmModel] | None = None
    for child in np.random.SeedSequence(seed).spawn(max(n_init, 1)):
        labels, model = _gmm_fit_once(x, k, child)
        if best is None or model.log_likelihood[-1] > best[1].log_likelihood[-1]:
            best = (labels, model)
    assert best is not None
    return best


def _gmm_fit_once(
    x: np.ndarray, k: int, seed_seq: np.random.SeedSequence
) -> tuple[LabelVector, GmmModel]:
    """One EM fit: k-means++ start, covariance ridge 1e-6, stop on
    log-likelihood gain < 1e-6 or 300 iterations.  A component that loses all
    its mass is reseeded once from the point farthest from the current means;
    a second collapse is an error."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be an Nxd matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    n, d = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ClusterError(f"cannot fit {k} components to {n} points")

    rng = np.random.Generator(np.random.PCG64(seed_seq))
    means = _kmeanspp_centers(x, k, rng)
    global_cov = np.cov(x, rowvar=False, ddof=0).reshape(d, d)
    ridge = COV_REGULARIZATION * np.eye(d)
    covariances = np.repeat((global_cov + ridge)[None], k, axis=0)
    weights = np.full(k, 1.0 / k)
    history: list[float] = []
    reseeded = np.zeros(k, dtype=bool)

    def e_step() -> tuple[np.ndarray, np.ndarray]:
        log_resp = np.empty((n, k))
        for c in range(k):
            log_resp[:, c] = np.log(weights[c]) + _log_gaussian(
                x, means[c], covariances[c]
            )
        return log_resp, _logsumexp_rows(log_resp)

    log_resp, norm = e_step()
    converged = False
    for _ in range(EM_MAX_ITER):
        resp = np.exp(log_resp - norm[:, None])
        mass = resp.sum(axis=0)

        empty = np.where(mass < 1e-10)[0]
        if empty.size:
            for c in empty:
                if reseeded[c]:
                    raise ClusterError(
                        f"mixture component {c} collapsed twice; "
                        "reduce k or perturb the data"
                    )
                reseeded[c] = True
                far = int(np.argmax(np.min(_sq_dists_to_means(x, means), axis=1)))
                means[c] = x[far]
                covariances[c] = global_cov + ridge
                weights[c] = 1.0 / n
            weights = weights / weights.sum()
            log_resp, norm = e_step()
            continue

        history.append(float(norm.sum()))
        if len(history) > 1 and history[-1] - history[-2] < EM_TOL:
            converged = True
            break

        weights = mass / n
        for c in range(k):
            means[c] = resp[:, c] @ x / mass[c]
            diff = x - means[c]
            covariances[c] = (resp[:, c] * diff.T) @ diff / mass[c] + ridge
        log_resp, norm = e_step()

    if not converged:  # responsibilities must reflect the final parameters
        log_resp, norm = e_step()

    labels = np.argmax(log_resp, axis=1)
    model = GmmModel(means, covariances, weights, history)
    return LabelVector(labels, k), model


def smooth_labels(labels: LabelVector, coords: CoordinateSet, b: int) -> LabelVector:
    """Reassign every spot to the majority label of its b nearest spots.

    A single simultaneous pass: all votes read the input labels and the spot
    itself never votes.  On a tie the spot keeps its current label when that
    label is among the modal ones, otherwise the smallest modal label wins.
    """
    n = len(labels)
    if coords.coords.shape[0] != n:
        raise ValueError("labels and coordinates disagree on the spot count")
    if not (1 <= b < n):
        raise ValueError(f"b must satisfy 1 <= b < N; got b={b}, N={n}")
    d2 = pairwise_sq_dists(coords.coords)
    np.fill_diagonal(d2, np.inf)
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :b]
    votes = np.zeros((n, labels.k), dtype=np.int64)
    np.add.at(votes, (np.repeat(np.arange(n), b), labels.labels[neighbors].ravel()), 1)
    top = votes.max(axis=1)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        modal = np.flatnonzero(votes[i] == top[i])
        current = labels.labels[i]
        out[i] = current if current in modal else modal[0]
    return LabelVector(out, labels.k)


def write_labels_csv(spot_ids: list[str], labels: LabelVector, path: str) -> None:
    if len(spot_ids) != len(labels):
        raise ValueError("spot_ids and labels differ in length")
    lines = ["spot_id,label"]
    for sid, lab in zip(spot_ids, labels.labels):
        lines.append(f"{sid},{int(lab)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path: str) -> tuple[list[str], LabelVector]:
    if not os.path.exists(path):
        raise DataFormatError(f"file not found: {path}")
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["spot_id", "label"]:
            raise DataFormatError(
                f"{path}: malformed header: expected 'spot_id,label', got {header!r}"
            )
        spot_ids: list[str] = []
        raw: list[int] = []
        for i, row in enumerate(reader):
            if not row or not any(row):
                continue
            if len(row) != 2:
                raise DataFormatError(
                    f"{path}: row {i + 1} has {len(row)} fields, expected 2"
                )
            spot_ids.append(row[0].strip())
            try:
                raw.append(int(row[1]))
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {i + 1}: cannot parse label {row[1]!r}"
                ) from None
    if not raw:
        raise DataFormatError(f"{path}: no data rows")
    labels = np.array(raw, dtype=np.int64)
    if labels.min() < 0:
        raise DataFormatError(f"{path}: negative label ids are not allowed")
    return spot_ids, LabelVector(labels, int(labels.max()) + 1)
