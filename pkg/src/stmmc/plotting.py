"""Deterministic SVG rendering of spatial cluster assignments.

One filled circle per spot; a fixed 12-color qualitative palette cycles over
cluster ids; one legend entry per cluster id present.  Output bytes depend
only on the inputs (fixed float formatting, no timestamps).
"""

from __future__ import annotations

import numpy as np

from .clusterer import LabelVector
from .ingest import CoordinateSet

PALETTE = (
    "#1f78b4",
    "#33a02c",
    "#e31a1c",
    "#ff7f00",
    "#6a3d9a",
    "#b15928",
    "#a6cee3",
    "#b2df8a",
    "#fb9a99",
    "#fdbf6f",
    "#cab2d6",
    "#ffff99",
)

_PLOT_SIZE = 640.0
_MARGIN = 30.0
_LEGEND_WIDTH = 110.0


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def cluster_color(label: int) -> str:
    return PALETTE[int(label) % len(PALETTE)]


def render_cluster_map(coords: CoordinateSet, labels: LabelVector) -> str:
    """Build the SVG document as a string."""
    n = len(labels)
    if coords.coords.shape[0] != n:
        raise ValueError("labels and coordinates disagree on the spot count")
    xy = coords.coords
    span = np.maximum(xy.max(axis=0) - xy.min(axis=0), 1e-9)
    scale = (_PLOT_SIZE - 2 * _MARGIN) / span.max()
    origin = xy.min(axis=0)
    screen = (xy - origin) * scale + _MARGIN

    if n > 1:
        diffs = screen[:, None, :] - screen[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diffs, diffs)
        np.fill_diagonal(d2, np.inf)
        radius = max(0.45 * float(np.sqrt(d2.min())), 1.0)
    else:
        radius = 10.0

    present = sorted(set(int(v) for v in labels.labels))
    width = _PLOT_SIZE + _LEGEND_WIDTH
    height = max(_PLOT_SIZE, _MARGIN + 22.0 * len(present))

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        '<g class="spots">',
    ]
    for (sx, sy), lab in zip(screen, labels.labels):
        parts.append(
            f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="{_fmt(radius)}" '
            f'fill="{cluster_color(int(lab))}"/>'
        )
    parts.append("</g>")
    parts.append('<g class="legend">')
    for row, lab in enumerate(present):
        y = _MARGIN + 22.0 * row
        parts.append(
            f'<g class="legend-entry">'
            f'<rect x="{_fmt(_PLOT_SIZE + 10.0)}" y="{_fmt(y)}" width="14" '
            f'height="14" fill="{cluster_color(lab)}"/>'
            f'<text x="{_fmt(_PLOT_SIZE + 30.0)}" y="{_fmt(y + 12.0)}" '
            f'font-family="sans-serif" font-size="13">cluster {lab}</text>'
            f"</g>"
        )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
