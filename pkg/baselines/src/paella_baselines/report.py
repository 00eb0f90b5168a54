"""Run-level decisions and the shared report schema.

The CSV layout here is byte-compatible with the detection pipeline's
report output: same header, same %.3f rounding, per-benchmark rows in
sorted order with the overall row last, and the same class-imbalance
weighting (inverse class counts per scope unless explicit weights are
given).
"""

import io

from .io import LABELS

REPORT_HEADER = "benchmark_id,fa_rate,mm_rate,f1,tp,fp,fn,tn"
DECISIONS_HEADER = "run_id,benchmark_id,label,predicted,outlier_fraction"


def weighted_f1(tp: int, fp: int, fn: int, w_m: float, w_h: float) -> float:
    """F1 with the malware/healthy counts weighted per class."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be nonnegative")
    if w_m <= 0 or w_h <= 0:
        raise ValueError("weights must be positive")
    denom = 2.0 * tp * w_m + fp * w_h + fn * w_m
    if denom == 0:
        raise ValueError("weighted F1 undefined when tp, fp and fn are all zero")
    return 2.0 * tp * w_m / denom


def _scope_row(results, weights):
    tp = fp = fn = tn = 0
    for _, label, predicted in results:
        if label == "malware":
            tp += predicted == "malware"
            fn += predicted == "healthy"
        else:
            fp += predicted == "malware"
            tn += predicted == "healthy"
    n_malware = tp + fn
    n_healthy = fp + tn
    if weights is not None:
        w_m, w_h = weights
    else:
        w_m = 1.0 / n_malware if n_malware else 1.0
        w_h = 1.0 / n_healthy if n_healthy else 1.0
    fa = fp / n_healthy if n_healthy else 0.0
    mm = fn / n_malware if n_malware else 0.0
    f1 = weighted_f1(tp, fp, fn, w_m, w_h) if (tp or fp or fn) else 1.0
    return fa, mm, f1, tp, fp, fn, tn


def report_csv(results, weights: tuple = None) -> str:
    """Render (benchmark_id, label, predicted) triples as the report CSV."""
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    for _, label, predicted in results:
        if label not in LABELS or predicted not in LABELS:
            raise ValueError(f"labels must be in {LABELS}")
    out = io.StringIO()
    out.write(REPORT_HEADER + "\n")
    scopes = [(b, [r for r in results if r[0] == b])
              for b in sorted({r[0] for r in results})]
    scopes.append(("overall", results))
    for name, rows in scopes:
        fa, mm, f1, tp, fp, fn, tn = _scope_row(rows, weights)
        out.write(f"{name},{fa:.3f},{mm:.3f},{f1:.3f},{tp},{fp},{fn},{tn}\n")
    return out.getvalue()


def write_decisions(path, rows) -> None:
    """Persist per-run classifications for later aggregation."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DECISIONS_HEADER + "\n")
        for run_id, benchmark_id, label, predicted, fraction in rows:
            fh.write(f"{run_id},{benchmark_id},{label},{predicted},{fraction!r}\n")


def read_decisions(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [l.rstrip("\n") for l in fh if l.strip()]
    if not lines or lines[0] != DECISIONS_HEADER:
        raise ValueError(f"{path}: not a decisions file")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        fields = line.split(",")
        if len(fields) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields")
        run_id, benchmark_id, label, predicted, fraction = fields
        if label not in LABELS or predicted not in LABELS:
            raise ValueError(f"{path}:{lineno}: labels must be in {LABELS}")
        rows.append((run_id, benchmark_id, label, predicted, float(fraction)))
    return rows
