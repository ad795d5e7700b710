"""Loading and validation of the three input modalities.

File formats (CSV or TSV, sniffed per file from the header line):

- expression:  ``spot_id,<gene_1>,...,<gene_M>`` then one row per spot
- coordinates: ``spot_id,x,y``
- features:    ``spot_id,f_1,...,f_D``
- image:       8-bit RGB PNG or PPM

``load_dataset`` aligns all files to the expression file's spot order and
errors on any spot_id mismatch; it never drops or imputes spots.  When no
precomputed feature file is available, :func:`extract_patch_features`
produces a 12-dimensional per-spot summary (per-channel mean / std / min /
max, scaled to [0, 1]) from square histology patches, so the pipeline runs
end-to-end without an external feature model.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DataFormatError
from .fileio import atomic_write_text, format_float

PATCH_FEATURE_DIM = 12
DEFAULT_PATCH_WIDTH = 96

FeatureSource = Literal["precomputed", "patch_stats"]


def _check_unique(ids: list[str], what: str, path: str | None = None) -> None:
    seen: dict[str, int] = {}
    for row, sid in enumerate(ids):
        if sid in seen:
            where = f" in {path}" if path else ""
            raise DataFormatError(
                f"duplicate {what} {sid!r}{where} (rows {seen[sid] + 1} and {row + 1})"
            )
        seen[sid] = row


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(
            f"non-finite {what} value at (row {bad[0] + 1}, col {bad[1] + 1})"
        )


@dataclass
class ExpressionMatrix:
    """N spots x M genes of nonnegative expression values."""

    values: np.ndarray
    spot_ids: list[str]
    gene_ids: list[str]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataFormatError("expression values must be a 2-D matrix")
        n, m = self.values.shape
        if n < 1 or m < 1:
            raise DataFormatError("expression matrix must be at least 1x1")
        if len(self.spot_ids) != n or len(self.gene_ids) != m:
            raise DataFormatError("expression id lists do not match matrix shape")
        _check_unique(self.spot_ids, "spot_id")
        _check_unique(self.gene_ids, "gene_id")
        _check_finite(self.values, "expression")
        if np.any(self.values < 0):
            r, c = np.argwhere(self.values < 0)[0]
            raise DataFormatError(
                f"negative expression at (row {r + 1}, col {c + 1}): "
                f"spot {self.spot_ids[r]!r}, gene {self.gene_ids[c]!r}"
            )

    @property
    def n_spots(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]


@dataclass
class CoordinateSet:
    """Per-spot (x, y) locations, aligned to an ExpressionMatrix."""

    coords: np.ndarray
    spot_ids: list[str]

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise DataFormatError("coordinates must be an Nx2 matrix")
        if len(self.spot_ids) != self.coords.shape[0]:
            raise DataFormatError("coordinate id list does not match matrix shape")
        _check_unique(self.spot_ids, "spot_id")
        _check_finite(self.coords, "coordinate")
        # identical locations break KNN tie-breaking downstream
        seen: dict[tuple[float, float], str] = {}
        for sid, (x, y) in zip(self.spot_ids, self.coords):
            key = (float(x), float(y))
            if key in seen:
                raise DataFormatError(
                    f"spots {seen[key]!r} and {sid!r} share identical coordinates {key}"
                )
            seen[key] = sid


@dataclass
class FeatureMatrix:
    """N spots x D image-feature values, aligned to an ExpressionMatrix."""

    values: np.ndarray
    spot_ids: list[str]
    source: FeatureSource = "precomputed"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise DataFormatError("feature values must be an NxD matrix with D >= 1")
        if len(self.spot_ids) != self.values.shape[0]:
            raise DataFormatError("feature id list does not match matrix shape")
        _check_unique(self.spot_ids, "spot_id")
        _check_finite(self.values, "feature")

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if "\t" in header_line else ","


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    """Read a CSV/TSV into (header, rows); delimiter sniffed from the header."""
    if not os.path.exists(path):
        raise DataFormatError(f"file not found: {path}")
    with open(path, "r", newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise DataFormatError(f"{path}: empty file or blank header")
        delim = _sniff_delimiter(first)
        header = next(csv.reader([first], delimiter=delim))
        rows = [row for row in csv.reader(fh, delimiter=delim) if row and any(row)]
    if len(rows) == 0:
        raise DataFormatError(f"{path}: no data rows")
    return [h.strip() for h in header], rows


def _parse_float(cell: str, path: str, row: int, col_name: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataFormatError(
            f"{path}: row {row}, column {col_name!r}: cannot parse {cell!r} as a number"
        ) from None
    if math.isnan(v) or math.isinf(v):
        raise DataFormatError(
            f"{path}: row {row}, column {col_name!r}: non-finite value {cell!r}"
        )
    return v


def _parse_matrix_file(
    path: str, kind: str
) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a ``spot_id,<col>,...`` table into (spot_ids, col_names, matrix)."""
    header, rows = _read_table(path)
    if len(header) < 2 or header[0] != "spot_id":
        raise DataFormatError(
            f"{path}: malformed header: expected 'spot_id,<{kind} columns>', got {header!r}"
        )
    col_names = header[1:]
    spot_ids: list[str] = []
    values = np.empty((len(rows), len(col_names)), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}"
            )
        spot_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            values[i, j] = _parse_float(cell, path, i + 1, col_names[j])
    _check_unique(spot_ids, "spot_id", path)
    return spot_ids, col_names, values


def read_expression_csv(path: str) -> ExpressionMatrix:
    spot_ids, gene_ids, values = _parse_matrix_file(path, "gene")
    if np.any(values < 0):
        r, c = np.argwhere(values < 0)[0]
        raise DataFormatError(
            f"{path}: negative expression at (row {r + 1}, col {c + 1}): "
            f"spot {spot_ids[r]!r}, gene {gene_ids[c]!r}"
        )
    return ExpressionMatrix(values, spot_ids, gene_ids)


def read_coordinates_csv(path: str) -> CoordinateSet:
    header, rows = _read_table(path)
    if [h for h in header] != ["spot_id", "x", "y"]:
        raise DataFormatError(
            f"{path}: malformed header: expected 'spot_id,x,y', got {header!r}"
        )
    spot_ids = []
    coords = np.empty((len(rows), 2), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != 3:
            raise DataFormatError(
                f"{path}: row {i + 1} has {len(row)} fields, expected 3"
            )
        spot_ids.append(row[0].strip())
        coords[i, 0] = _parse_float(row[1], path, i + 1, "x")
        coords[i, 1] = _parse_float(row[2], path, i + 1, "y")
    _check_unique(spot_ids, "spot_id", path)
    return CoordinateSet(coords, spot_ids)


def read_features_csv(path: str) -> FeatureMatrix:
    spot_ids, _names, values = _parse_matrix_file(path, "feature")
    return FeatureMatrix(values, spot_ids, source="precomputed")


def _align_to(
    reference_ids: list[str], ids: list[str], what: str
) -> np.ndarray:
    """Indices that reorder ``ids`` into ``reference_ids`` order; errors on mismatch."""
    index = {sid: i for i, sid in enumerate(ids)}
    missing = [sid for sid in reference_ids if sid not in index]
    if missing:
        raise DataFormatError(
            f"{what}: missing spot_ids {missing[:5]!r}"
            + (f" (+{len(missing) - 5} more)" if len(missing) > 5 else "")
        )
    extra = set(ids) - set(reference_ids)
    if extra:
        shown = sorted(extra)[:5]
        raise DataFormatError(
            f"{what}: spot_ids absent from the expression file: {shown!r}"
            + (f" (+{len(extra) - 5} more)" if len(extra) > 5 else "")
        )
    return np.array([index[sid] for sid in reference_ids], dtype=np.int64)


def load_dataset(
    expr_path: str,
    coord_path: str,
    feat_path: str | None = None,
) -> tuple[ExpressionMatrix, CoordinateSet, FeatureMatrix | None]:
    """Load and align the modalities to the expression file's spot order."""
    expr = read_expression_csv(expr_path)
    coords = read_coordinates_csv(coord_path)
    order = _align_to(expr.spot_ids, coords.spot_ids, coord_path)
    coords = CoordinateSet(coords.coords[order], list(expr.spot_ids))
    feats: FeatureMatrix | None = None
    if feat_path is not None:
        feats = read_features_csv(feat_path)
        order = _align_to(expr.spot_ids, feats.spot_ids, feat_path)
        feats = FeatureMatrix(feats.values[order], list(expr.spot_ids), feats.source)
    return expr, coords, feats


def load_image(path: str) -> np.ndarray:
    """Read an 8-bit RGB PNG/PPM into an (H, W, 3) uint8 array."""
    from PIL import Image

    if not os.path.exists(path):
        raise DataFormatError(f"file not found: {path}")
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise DataFormatError(
                f"{path}: expected an 8-bit RGB raster, got mode {img.mode!r}"
            )
        return np.asarray(img, dtype=np.uint8)


def extract_patch_features(
    image: np.ndarray,
    coords: CoordinateSet,
    patch_width: int = DEFAULT_PATCH_WIDTH,
) -> FeatureMatrix:
    """Per-spot patch statistics: channel mean/std/min/max, scaled to [0, 1].

    The square patch is centered on the spot's pixel coordinate and clamped to
    the image bounds, so edge spots keep a (smaller) valid patch instead of
    being dropped.  Output columns are mean_r..b, std_r..b, min_r..b, max_r..b.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataFormatError("expected an RGB raster of shape (H, W, 3)")
    if patch_width < 1:
        raise ValueError("patch_width must be >= 1")
    h, w = image.shape[:2]
    pixels = image.astype(np.float64) / 255.0
    out = np.empty((len(coords.spot_ids), PATCH_FEATURE_DIM), dtype=np.float64)
    half = patch_width // 2
    for i, (x, y) in enumerate(coords.coords):
        cx, cy = int(round(x)), int(round(y))
        if not (0 <= cx < w and 0 <= cy < h):
            raise DataFormatError(
                f"spot {coords.spot_ids[i]!r} coordinate ({x}, {y}) is outside the "
                f"{w}x{h} image"
            )
        r0 = max(cy - half, 0)
        r1 = min(cy - half + patch_width, h)
        c0 = max(cx - half, 0)
        c1 = min(cx - half + patch_width, w)
        patch = pixels[r0:r1, c0:c1].reshape(-1, 3)
        out[i, 0:3] = patch.mean(axis=0)
        out[i, 3:6] = patch.std(axis=0)
        out[i, 6:9] = patch.min(axis=0)
        out[i, 9:12] = patch.max(axis=0)
    return FeatureMatrix(out, list(coords.spot_ids), source="patch_stats")


def write_expression_csv(expr: ExpressionMatrix, path: str) -> None:
    lines = ["spot_id," + ",".join(expr.gene_ids)]
    for sid, row in zip(expr.spot_ids, expr.values):
        lines.append(sid + "," + ",".join(format_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_coordinates_csv(coords: CoordinateSet, path: str) -> None:
    lines = ["spot_id,x,y"]
    for sid, (x, y) in zip(coords.spot_ids, coords.coords):
        lines.append(f"{sid},{format_float(x)},{format_float(y)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_features_csv(feats: FeatureMatrix, path: str) -> None:
    header = "spot_id," + ",".join(f"f_{j + 1}" for j in range(feats.n_features))
    lines = [header]
    for sid, row in zip(feats.spot_ids, feats.values):
        lines.append(sid + "," + ",".join(format_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_matrix_csv(
    values: np.ndarray, spot_ids: list[str], col_names: list[str], path: str
) -> None:
    """Write an arbitrary real matrix in the expression file layout."""
    lines = ["spot_id," + ",".join(col_names)]
    for sid, row in zip(spot_ids, np.asarray(values)):
        lines.append(sid + "," + ",".join(format_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
