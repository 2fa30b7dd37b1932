"""Command-line interface: ``irs-engine score|matrix|viz|synth``.

Exit codes: 0 success, 2 usage or validation error, 3 degenerate result
(only inactive features), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DEFAULT_BUCKETS, mi_report
from .data_model import (
    DiscretizationPlan,
    load_dataset,
    write_csv_table,
    write_npy,
)
from .errors import EnumerationBudgetError, ValidationError
from .irs_core import DISTANCES, IrsConfig, dependency_matrix, irs
from .partitioner import IndexSpec, build_partition
from .scm_synth import config_hash, load_synth_config, sample_dataset
from .viz import viz_curves

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

log = logging.getLogger("irs_engine")


class UsageError(Exception):
    pass


def _default_workers() -> int:
    raw = os.environ.get("IRS_ENGINE_WORKERS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _parse_indices(flag: str, text, names=None, allow_empty=False) -> tuple:
    if text is None:
        return ()
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts and not allow_empty:
        raise UsageError(f"{flag}: expected a comma-separated index list, got {text!r}")
    out = []
    for p in parts:
        if p.lstrip("-").isdigit():
            out.append(int(p))
        elif names is not None and p in names:
            out.append(list(names).index(p))
        else:
            raise UsageError(f"{flag}: unknown index or name {p!r}")
    return tuple(out)


def _load(args):
    plan = DiscretizationPlan.from_json(args.plan) if args.plan else None
    code_cols = args.code_columns.split(",") if args.code_columns else None
    factor_cols = args.factor_columns.split(",") if args.factor_columns else None
    return load_dataset(args.codes, args.factors, plan, code_cols, factor_cols)


def _config(args, **extra) -> IrsConfig:
    return IrsConfig(
        distance=args.distance,
        mode=args.mode,
        normalize_weights=not args.raw_weights,
        min_cell_size=args.min_cell_size,
        clamp=args.clamp,
        workers=args.workers,
        **extra,
    )


def _emit(doc: dict, out) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def cmd_score(args) -> int:
    d = _load(args)
    L = _parse_indices("--L", args.L, d.feature_names)
    if args.S is not None:
        if args.I is not None or args.J is not None:
            raise UsageError("--S cannot be combined with --I/--J")
        S = _parse_indices("--S", args.S, d.factor_names)
        if set(S) == set(range(d.n_factors)):
            raise UsageError(f"--S: {args.S!r} names every factor; the conditioning set would be empty")
        I = tuple(i for i in range(d.n_factors) if i not in S)
        J = S
    else:
        I = _parse_indices("--I", args.I, d.factor_names, allow_empty=True)
        if args.J is None:
            raise UsageError("--J is required (or use --S for domain shift)")
        J = _parse_indices("--J", args.J, d.factor_names)
    if not L:
        raise UsageError("--L: at least one feature index is required")
    spec = IndexSpec(L, I, J)
    spec.validate(d)
    config = _config(args)
    if args.dump_partition:
        Path(args.dump_partition).write_text(
            json.dumps(build_partition(d, spec).skeleton(), indent=2) + "\n", encoding="utf-8"
        )
    result = irs(d, spec, config)
    doc = {
        "metric": "irs",
        "L": list(L),
        "I": list(I),
        "J": list(J),
        "status": result.status,
        "irs": result.value,
        "empida": result.empida,
        "normalizer": result.normalizer,
        "config": config.echo(),
        "warnings": list(result.warnings),
    }
    _emit(doc, args.out)
    return EXIT_OK if result.active else EXIT_DEGENERATE


def cmd_matrix(args) -> int:
    d = _load(args)
    if args.metric == "mi":
        report = mi_report(d, args.buckets)
        doc = report.to_dict()
        status_ok = True
    else:
        report = dependency_matrix(d, _config(args, fast_path=args.fast_path))
        doc = report.to_dict()
        status_ok = report.status == "ok"
    if args.csv:
        matrix = np.asarray(report.matrix, dtype=np.float64)
        names = list(d.factor_names) if d.factor_names else [f"g_{i}" for i in range(d.n_factors)]
        write_csv_table(args.csv, matrix, names)
    _emit(doc, args.out)
    return EXIT_OK if status_ok else EXIT_DEGENERATE


def cmd_viz(args) -> int:
    d = _load(args)
    features = _parse_indices("--features", args.features, d.feature_names) if args.features else None
    if features is not None:
        for l in features:
            if not 0 <= l < d.n_features:
                raise UsageError(f"--features: index {l} out of range [0, {d.n_features})")
    doc = viz_curves(d, features, _config(args))
    _emit(doc, args.out)
    if all(f["status"] != "ok" for f in doc["features"]):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg, enc, doc = load_synth_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    if args.crossed and args.n is not None:
        raise UsageError("--n cannot be combined with --crossed (row count is the tuple count)")
    if not args.crossed and args.n is None:
        raise UsageError("--n is required unless --crossed is given")
    d = sample_dataset(cfg, enc, args.n, seed, crossed=args.crossed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    factor_names = [n if n.startswith("g_") else f"g_{n}" for n in d.factor_names]
    if args.format == "npy":
        files = {"codes": "codes.npy", "factors": "factors.npy"}
        write_npy(out / files["codes"], d.codes.astype("<f8"))
        write_npy(out / files["factors"], d.factors.astype("<i8"))
    else:
        files = {"codes": "codes.csv", "factors": "factors.csv"}
        write_csv_table(out / files["codes"], d.codes, d.feature_names)
        write_csv_table(out / files["factors"], d.factors, factor_names, integer=True)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "seed": seed,
        "n": d.n_rows,
        "crossed": bool(args.crossed),
        "config_hash": config_hash(doc),
        "files": {**files, "config": "config.json"},
        "factor_cardinalities": list(d.factor_cardinalities),
        "n_features": d.n_features,
        "rng": "numpy PCG64",
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--codes", required=True, help="codes file (.csv or .npy)")
    p.add_argument("--factors", help="factors file (.csv or .npy); defaults to --codes")
    p.add_argument("--code-columns", help="explicit comma-separated code column names")
    p.add_argument("--factor-columns", help="explicit comma-separated factor column names")
    p.add_argument("--plan", help="discretization plan JSON")
    p.add_argument("--distance", choices=sorted(DISTANCES), default="l2")
    p.add_argument("--mode", choices=("weighted", "conditional"), default="weighted")
    p.add_argument("--raw-weights", action="store_true", help="skip per-cell weight normalization")
    p.add_argument("--min-cell-size", type=int, default=1)
    p.add_argument("--clamp", action="store_true", help="clamp scores to [0, 1]")
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", help="write JSON here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irs-engine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="IRS of one feature set")
    _add_data_args(p)
    p.add_argument("--L", required=True, help="feature indices or names")
    p.add_argument("--I", help="conditioning factor indices (may be empty)")
    p.add_argument("--J", help="intervened nuisance factor indices")
    p.add_argument("--S", help="domain factors; scores IRS(L | rest, S)")
    p.add_argument("--dump-partition", metavar="PATH", help="write the partition skeleton as JSON")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("matrix", help="dependency matrix and disentanglement scores")
    _add_data_args(p)
    p.add_argument("--metric", choices=("irs", "mi"), default="irs")
    p.add_argument("--buckets", type=int, default=DEFAULT_BUCKETS)
    p.add_argument("--fast-path", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--csv", help="also write the matrix as CSV")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("viz", help="interventional-effect curve data")
    _add_data_args(p)
    p.add_argument("--features", help="feature indices (default: all)")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("synth", help="sample a dataset from an SCM config")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--crossed", action="store_true", help="emit every factor tuple exactly once")
    p.add_argument("--format", choices=("csv", "npy"), default="csv")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ValidationError, EnumerationBudgetError) as exc:
        print(f"irs-engine {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"irs-engine {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
