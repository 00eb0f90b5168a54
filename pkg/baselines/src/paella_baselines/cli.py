"""paella-baselines: fit, classify, report.

Consumes run manifests and feature CSVs exported by the detection
pipeline, and emits reports in the same CSV schema, so the two arms of
a comparison can be diffed column for column.
"""

import argparse
import sys

import numpy as np

from .io import read_feature_csv, read_manifest
from .model import (
    METHODS,
    BaselineConfig,
    classify_run_baseline,
    fit_baseline,
    load_handle,
    save_handle,
)
from .report import read_decisions, report_csv, write_decisions


def _cmd_fit(args) -> int:
    cfg = BaselineConfig(
        method=args.method,
        pca_components=args.pca,
        gamma=args.gamma,
        nu=args.nu,
        outlier_threshold=args.outlier_threshold,
        seed=args.seed,
    )
    mats = []
    for run_id, _, label, path in read_manifest(args.manifest):
        if label != "healthy":
            raise ValueError(f"training manifest contains non-healthy run {run_id!r}")
        mats.append(read_feature_csv(path))
    handle = fit_baseline(np.vstack(mats), cfg)
    save_handle(handle, args.out)
    dim = handle.config.effective_pca or handle.n_features
    print(
        f"fitted {cfg.method} on {sum(m.shape[0] for m in mats)} rows "
        f"({handle.n_features} -> {dim} dims)",
        file=sys.stderr,
    )
    return 0


def _cmd_classify(args) -> int:
    handle = load_handle(args.model)
    rows = []
    for run_id, benchmark_id, label, path in read_manifest(args.manifest):
        predicted, fraction = classify_run_baseline(handle, read_feature_csv(path))
        rows.append((run_id, benchmark_id, label, predicted, fraction))
    write_decisions(args.out, rows)
    n_mal = sum(r[3] == "malware" for r in rows)
    print(f"classified {len(rows)} runs: {n_mal} malware", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    if (args.w_m is None) != (args.w_h is None):
        raise ValueError("--w-m and --w-h must be given together")
    weights = None if args.w_m is None else (args.w_m, args.w_h)
    triples = []
    for path in args.decisions:
        triples.extend(
            (benchmark_id, label, predicted)
            for _, benchmark_id, label, predicted, _ in read_decisions(path)
        )
    csv = report_csv(triples, weights)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paella-baselines",
        description="One-class SVM / Isolation Forest comparison harness "
        "over exported PSD feature matrices",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("fit", help="train a baseline on healthy runs")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--manifest", required=True,
                   help="TSV of healthy training runs")
    p.add_argument("--out", required=True, help="fitted model file")
    p.add_argument("--pca", type=int, default=None,
                   help="PCA components (default: 25 for ocsvm, none for iforest)")
    p.add_argument("--gamma", type=float, default=0.1,
                   help="poly kernel coefficient (ocsvm)")
    p.add_argument("--nu", type=float, default=0.1,
                   help="training outlier bound (ocsvm)")
    p.add_argument("--outlier-threshold", type=float, default=0.30,
                   help="run is malware when the outlier fraction exceeds this")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("classify", help="label each run in a manifest")
    p.add_argument("--model", required=True, help="fitted model file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="decisions CSV")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("report", help="aggregate decisions into the report CSV")
    p.add_argument("--decisions", action="append", required=True,
                   help="decisions CSV from classify (repeatable)")
    p.add_argument("--out", default=None, help="report CSV (default stdout)")
    p.add_argument("--w-m", type=float, default=None,
                   help="explicit malware class weight")
    p.add_argument("--w-h", type=float, default=None,
                   help="explicit healthy class weight")
    p.set_defaults(func=_cmd_report)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"paella-baselines {args.verb}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
