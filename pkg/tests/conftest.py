import numpy as np
import pytest

from stmmc.ingest import CoordinateSet, ExpressionMatrix, FeatureMatrix
from stmmc.synthgen import SynthSpec, generate

# collected by the acceptance tests, echoed after the run so the per-criterion
# verdicts are visible even with output capture on
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def golden_dataset():
    """The bundled synthetic benchmark: 20x20 lattice, 4 domains, seed 7."""
    return generate(SynthSpec())


@pytest.fixture()
def tiny_dataset(tmp_path):
    """A 3-spot, 2-gene dataset written to disk in all three formats."""
    expr = ExpressionMatrix(
        np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]),
        ["s1", "s2", "s3"],
        ["g1", "g2"],
    )
    coords = CoordinateSet(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), ["s1", "s2", "s3"]
    )
    feats = FeatureMatrix(
        np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]]),
        ["s1", "s2", "s3"],
    )
    expr_path = tmp_path / "expr.csv"
    coord_path = tmp_path / "coords.csv"
    feat_path = tmp_path / "feats.csv"
    expr_path.write_text(
        "spot_id,g1,g2\ns1,1.0,2.0\ns2,3.0,4.0\ns3,5.0,6.0\n"
    )
    coord_path.write_text("spot_id,x,y\ns1,0.0,0.0\ns2,1.0,0.0\ns3,0.0,1.0\n")
    feat_path.write_text(
        "spot_id,f_1,f_2,f_3\ns1,0.1,0.2,0.3\ns2,0.4,0.5,0.6\ns3,0.7,0.8,0.9\n"
    )
    return {
        "expr": expr,
        "coords": coords,
        "feats": feats,
        "expr_path": str(expr_path),
        "coord_path": str(coord_path),
        "feat_path": str(feat_path),
    }
