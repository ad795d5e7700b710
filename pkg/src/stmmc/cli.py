"""Command-line entry point: ``stmmc simulate | run | evaluate | plot``.

``run`` drives the full pipeline (ingest, preprocess, train, cluster, smooth)
from a flat ``key = value`` config file plus command-line overrides, and drops
``labels.csv``, ``history.csv`` and a reproducibility ``manifest.json`` into
the output directory.  Re-running with ``--config manifest.json`` reproduces
the label and history files byte for byte.

Exit codes: 0 success, 1 data/pipeline error, 2 config parse failure.
"""

from __future__ import annotations

import os

# Cap BLAS pools before numpy loads anywhere in this process.
_threads = os.environ.get("STMMC_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(_var, _threads)

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone

from . import __version__
from .errors import ConfigError, StmmcError

_CONFIG_TYPES: dict[str, type | str] = {
    "expr_path": str,
    "coord_path": str,
    "feat_path": str,
    "image_path": str,
    "truth_path": str,
    "patch_width": int,
    "n_clusters": int,
    "epochs": int,
    "learning_rate": float,
    "seed": int,
    "hidden_dims": "int_list",
    "pca_dim": int,
    "k_neighbors": int,
    "m_keep": int,
    "theta1": float,
    "theta2": float,
    "use_image_modality": bool,
    "use_contrastive": bool,
    "use_smoothing": bool,
    "b_smooth": int,
    "normalize": bool,
    "gmm_pca_dim": int,
    "out_dir": str,
    "save_checkpoint": bool,
    "save_reconstruction": bool,
}


def _coerce(key: str, raw) -> object:
    kind = _CONFIG_TYPES[key]
    if raw is None:
        return None
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int_list":
            if isinstance(raw, (list, tuple)):
                return tuple(int(v) for v in raw)
            return tuple(int(v) for v in str(raw).split(",") if v.strip())
        assert isinstance(kind, type)
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def load_config_file(path: str) -> dict:
    """Flat ``key = value`` text, or a manifest JSON with a ``config`` object."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r") as fh:
        text = fh.read()
    values: dict[str, object] = {}
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        section = obj.get("config", obj)
        for key, raw in section.items():
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            if raw is None:  # explicit null = key absent
                continue
            values[key] = _coerce(key, raw)
        return values
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}: line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def _resolve_run_config(args: argparse.Namespace) -> dict:
    values: dict[str, object] = {}
    if args.config:
        values.update(load_config_file(args.config))
    overrides = {
        "expr_path": args.expr,
        "coord_path": args.coords,
        "feat_path": args.features,
        "image_path": args.image,
        "patch_width": args.patch_width,
        "n_clusters": args.n_clusters,
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
        "hidden_dims": args.hidden_dims,
        "pca_dim": args.pca_dim,
        "k_neighbors": args.k_neighbors,
        "m_keep": args.m_keep,
        "b_smooth": args.b_smooth,
        "out_dir": args.out_dir,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = _coerce(key, value)
    if args.no_image:
        values["use_image_modality"] = False
    if args.no_contrastive:
        values["use_contrastive"] = False
    if args.no_smoothing:
        values["use_smoothing"] = False
    if args.save_checkpoint:
        values["save_checkpoint"] = True
    if args.save_reconstruction:
        values["save_reconstruction"] = True
    for required in ("expr_path", "coord_path", "n_clusters"):
        if required not in values:
            raise ConfigError(f"missing required config key {required!r}")
    return values


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_run(args: argparse.Namespace) -> int:
    from .clusterer import write_labels_csv
    from .fileio import atomic_write_text
    from .ingest import extract_patch_features, load_dataset, load_image, write_matrix_csv
    from .mpga import LossWeights
    from .pipeline import run_pipeline
    from .tensor_core import save_params
    from .trainer import TrainConfig

    values = _resolve_run_config(args)
    started = datetime.now(timezone.utc).isoformat()

    expr, coords, feats = load_dataset(
        str(values["expr_path"]),
        str(values["coord_path"]),
        str(values["feat_path"]) if "feat_path" in values else None,
    )
    patch_width = int(values.get("patch_width", 96))
    use_image = bool(values.get("use_image_modality", True))
    if feats is None and "image_path" in values and use_image:
        image = load_image(str(values["image_path"]))
        feats = extract_patch_features(image, coords, patch_width)

    try:
        cfg = TrainConfig(
            n_clusters=int(values["n_clusters"]),
            epochs=int(values.get("epochs", 600)),
            learning_rate=float(values.get("learning_rate", 1e-3)),
            seed=int(values.get("seed", 0)),
            hidden_dims=tuple(values.get("hidden_dims", (512, 64))),
            pca_dim=int(values.get("pca_dim", 50)),
            k_neighbors=int(values.get("k_neighbors", 3)),
            m_keep=int(values.get("m_keep", 3000)),
            loss_weights=LossWeights(
                theta1=float(values.get("theta1", 10.0)),
                theta2=float(values.get("theta2", 1.0)),
            ),
            use_image_modality=use_image,
            use_contrastive=bool(values.get("use_contrastive", True)),
            use_smoothing=bool(values.get("use_smoothing", True)),
            b_smooth=int(values.get("b_smooth", 50)),
            normalize=bool(values.get("normalize", True)),
            gmm_pca_dim=(
                int(values["gmm_pca_dim"])
                if values.get("gmm_pca_dim") is not None
                else None
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    result = run_pipeline(expr, feats, coords, cfg)

    out_dir = str(values.get("out_dir", "stmmc_out"))
    os.makedirs(out_dir, exist_ok=True)
    outputs: list[str] = []

    labels_path = os.path.join(out_dir, "labels.csv")
    write_labels_csv(expr.spot_ids, result.labels, labels_path)
    outputs.append(labels_path)

    history_path = os.path.join(out_dir, "history.csv")
    result.train_result.history.write_csv(history_path)
    outputs.append(history_path)

    if values.get("save_checkpoint"):
        checkpoint_path = os.path.join(out_dir, "checkpoint.csv")
        save_params(
            {
                name: p.value
                for name, p in result.train_result.model.named_params().items()
            },
            checkpoint_path,
        )
        outputs.append(checkpoint_path)

    if values.get("save_reconstruction"):
        rec_path = os.path.join(out_dir, "reconstruction.csv")
        write_matrix_csv(
            result.train_result.reconstruction,
            expr.spot_ids,
            result.train_result.prepared.hvg.gene_ids,
            rec_path,
        )
        outputs.append(rec_path)

    resolved = dict(values)
    resolved.update(
        {
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "seed": cfg.seed,
            "hidden_dims": list(cfg.hidden_dims),
            "pca_dim": cfg.pca_dim,
            "k_neighbors": cfg.k_neighbors,
            "m_keep": cfg.m_keep,
            "theta1": cfg.loss_weights.theta1,
            "theta2": cfg.loss_weights.theta2,
            "use_image_modality": cfg.use_image_modality,
            "use_contrastive": cfg.use_contrastive,
            "use_smoothing": cfg.use_smoothing,
            "b_smooth": cfg.b_smooth,
            "normalize": cfg.normalize,
            "gmm_pca_dim": cfg.gmm_pca_dim,
            "patch_width": patch_width,
            "out_dir": out_dir,
        }
    )
    manifest = {
        "tool": "stmmc",
        "version": __version__,
        "seed": cfg.seed,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "config": resolved,
        "outputs": {
            os.path.basename(p): {
                "sha256": _sha256(p),
                "bytes": os.path.getsize(p),
            }
            for p in outputs
        },
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    print(f"run complete: {len(expr.spot_ids)} spots, {cfg.n_clusters} clusters")
    print(f"final l_total = {result.train_result.history.l_total[-1]:.6g}")
    for path in outputs + [manifest_path]:
        print(f"wrote {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .clusterer import read_labels_csv
    from .metrics import ari, nmi, write_report_csv

    pred_ids, pred = read_labels_csv(args.pred)
    true_ids, truth = read_labels_csv(args.truth)
    if set(pred_ids) != set(true_ids):
        raise StmmcError(
            f"spot_ids differ between {args.pred} and {args.truth}; cannot compare"
        )
    order = {sid: i for i, sid in enumerate(pred_ids)}
    import numpy as np

    pred_aligned = pred.labels[np.array([order[sid] for sid in true_ids])]
    scores = {
        "ari": ari(pred_aligned, truth.labels),
        "nmi": nmi(pred_aligned, truth.labels),
    }
    for name, value in scores.items():
        print(f"{name}={value:.6f}")
    write_report_csv(scores, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    from .clusterer import read_labels_csv
    from .fileio import atomic_write_text
    from .ingest import read_coordinates_csv
    from .plotting import render_cluster_map

    import numpy as np

    label_ids, labels = read_labels_csv(args.labels)
    coords = read_coordinates_csv(args.coords)
    if set(label_ids) != set(coords.spot_ids):
        raise StmmcError(
            f"spot_ids differ between {args.labels} and {args.coords}; cannot plot"
        )
    order = {sid: i for i, sid in enumerate(coords.spot_ids)}
    aligned = coords.coords[np.array([order[sid] for sid in label_ids])]
    from .ingest import CoordinateSet

    svg = render_cluster_map(CoordinateSet(aligned, list(label_ids)), labels)
    atomic_write_text(args.out, svg)
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    from .clusterer import write_labels_csv
    from .ingest import write_coordinates_csv, write_expression_csv, write_features_csv
    from .synthgen import SynthSpec, generate

    try:
        spec = SynthSpec(
            rows=args.rows,
            cols=args.cols,
            n_domains=args.domains,
            n_genes=args.genes,
            signature_strength=args.signature,
            noise_sd=args.noise_sd,
            image_dim=args.image_dim,
            image_signal=args.image_signal,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    expr, coords, feats, labels = generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "expression.csv": lambda p: write_expression_csv(expr, p),
        "coords.csv": lambda p: write_coordinates_csv(coords, p),
        "features.csv": lambda p: write_features_csv(feats, p),
        "labels.csv": lambda p: write_labels_csv(expr.spot_ids, labels, p),
    }
    for name, writer in paths.items():
        path = os.path.join(args.out_dir, name)
        writer(path)
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stmmc",
        description="Multi-modal spatial clustering for spatial transcriptomics.",
    )
    parser.add_argument("--version", action="version", version=f"stmmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a seeded synthetic dataset")
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--rows", type=int, default=20)
    sim.add_argument("--cols", type=int, default=20)
    sim.add_argument("--domains", type=int, default=4)
    sim.add_argument("--genes", type=int, default=60)
    sim.add_argument("--signature", type=float, default=1.0)
    sim.add_argument("--noise-sd", type=float, default=0.5)
    sim.add_argument("--image-dim", type=int, default=12)
    sim.add_argument("--image-signal", type=float, default=2.0)
    sim.add_argument("--seed", type=int, default=7)
    sim.set_defaults(func=cmd_simulate)

    run = sub.add_parser("run", help="run the full clustering pipeline")
    run.add_argument("--config", help="flat key=value config file or manifest.json")
    run.add_argument("--expr", help="expression CSV (overrides expr_path)")
    run.add_argument("--coords", help="coordinates CSV (overrides coord_path)")
    run.add_argument("--features", help="feature CSV (overrides feat_path)")
    run.add_argument("--image", help="RGB PNG/PPM for fallback patch features")
    run.add_argument("--patch-width", type=int)
    run.add_argument("--n-clusters", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--learning-rate", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--hidden-dims", help="comma-separated layer widths")
    run.add_argument("--pca-dim", type=int)
    run.add_argument("--k-neighbors", type=int)
    run.add_argument("--m-keep", type=int)
    run.add_argument("--b-smooth", type=int)
    run.add_argument("--no-image", action="store_true")
    run.add_argument("--no-contrastive", action="store_true")
    run.add_argument("--no-smoothing", action="store_true")
    run.add_argument("--save-checkpoint", action="store_true")
    run.add_argument("--save-reconstruction", action="store_true")
    run.add_argument("--out-dir")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("evaluate", help="score predicted labels against a reference")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", default="evaluation.csv")
    ev.set_defaults(func=cmd_evaluate)

    plot = sub.add_parser("plot", help="render labels as an SVG cluster map")
    plot.add_argument("--labels", required=True)
    plot.add_argument("--coords", required=True)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StmmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
