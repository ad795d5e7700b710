#!/usr/bin/env python3
"""Regenerate the stored golden dataset under tests/golden/.

Only needed when the generator or the default SynthSpec changes; the test
suite asserts that regeneration stays bit-identical to these files.
"""

import os

from stmmc.clusterer import write_labels_csv
from stmmc.ingest import (
    write_coordinates_csv,
    write_expression_csv,
    write_features_csv,
)
from stmmc.synthgen import SynthSpec, generate


def main() -> None:
    golden_dir = os.path.join(os.path.dirname(__file__), "..", "tests", "golden")
    os.makedirs(golden_dir, exist_ok=True)
    expr, coords, feats, labels = generate(SynthSpec())
    write_expression_csv(expr, os.path.join(golden_dir, "expression.csv"))
    write_coordinates_csv(coords, os.path.join(golden_dir, "coords.csv"))
    write_features_csv(feats, os.path.join(golden_dir, "features.csv"))
    write_labels_csv(expr.spot_ids, labels, os.path.join(golden_dir, "labels.csv"))
    for name in ("expression.csv", "coords.csv", "features.csv", "labels.csv"):
        print(f"wrote {os.path.join(golden_dir, name)}")


if __name__ == "__main__":
    main()
