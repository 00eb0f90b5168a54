"""Run-level evaluation: splits, confusion metrics, and report rendering.

A "run" is one labeled acquisition (a matrix of PSD rows). Training
uses healthy runs only; validation and test sets mix healthy runs with
malware runs. Classification applies the per-PSD threshold over all
rows of a run and the outlier-fraction rule over the whole run.

The F1 score weights true positives, false positives, and false
negatives by per-class weights to correct class imbalance: with counts
(tp, fp, fn) and weights (w_m, w_h),

    f1 = 2 tp w_m / (2 tp w_m + fp w_h + fn w_m).

Default weights are the inverse class run counts of the evaluated set
(w_m = 1/n_malware, w_h = 1/n_healthy), so each class contributes in
proportion to its share rather than its raw count; the score is
invariant under scaling both weights by the same constant, so any
normalization of the same ratio gives the same value.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import AeModel
from .detector import DetectorConfig, reconstruction_errors

LABELS = ("healthy", "malware")


@dataclass(frozen=True)
class LabeledRun:
    """One acquisition: id, benchmark, label, and its PSD feature rows."""

    run_id: str
    benchmark_id: str
    label: str
    features: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be healthy/malware, got {self.label!r}")
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.size == 0:
            raise ValueError("features must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)


@dataclass(frozen=True)
class SplitSpec:
    """Per-class split fractions; healthy train/val/test, malware val/test."""

    healthy_train: float = 0.60
    healthy_val: float = 0.20
    healthy_test: float = 0.20
    malware_val: float = 0.50
    malware_test: float = 0.50
    seed: int = 0

    def __post_init__(self):
        h = (self.healthy_train, self.healthy_val, self.healthy_test)
        m = (self.malware_val, self.malware_test)
        if any(f < 0 for f in h + m):
            raise ValueError("split fractions must be nonnegative")
        if abs(sum(h) - 1.0) > 1e-9 or abs(sum(m) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1 per class")


def _cut(n: int, fractions) -> list:
    """Nearest-rank cumulative boundaries, each partition non-empty."""
    bounds = []
    cum = 0.0
    for f in fractions[:-1]:
        cum += f
        bounds.append(math.ceil(cum * n))
    sizes = []
    prev = 0
    for b in bounds + [n]:
        sizes.append(b - prev)
        prev = b
    # non-emptiness guard: borrow from the largest partition
    for i, s in enumerate(sizes):
        while sizes[i] == 0:
            donor = max(range(len(sizes)), key=lambda j: sizes[j])
            if sizes[donor] <= 1:
                raise ValueError(f"cannot split {n} runs into {len(sizes)} non-empty parts")
            sizes[donor] -= 1
            sizes[i] += 1
    return sizes


def split_runs(runs, spec: SplitSpec):
    """Deterministic per-benchmark split into (train, val, test) run lists.

    Splitting is by whole run. The training partition holds healthy
    runs only; malware runs divide between validation and test.
    """
    by_bench = {}
    for run in runs:
        by_bench.setdefault(run.benchmark_id, []).append(run)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for bench in sorted(by_bench):
        healthy = [r for r in by_bench[bench] if r.label == "healthy"]
        malware = [r for r in by_bench[bench] if r.label == "malware"]
        if len(healthy) < 5:
            raise ValueError(
                f"benchmark {bench!r} has {len(healthy)} healthy runs, need >= 5"
            )
        if len(malware) < 2:
            raise ValueError(
                f"benchmark {bench!r} has {len(malware)} malware runs, need >= 2"
            )
        healthy = [healthy[i] for i in rng.permutation(len(healthy))]
        malware = [malware[i] for i in rng.permutation(len(malware))]
        n_tr, n_va, n_te = _cut(
            len(healthy), (spec.healthy_train, spec.healthy_val, spec.healthy_test)
        )
        m_va, m_te = _cut(len(malware), (spec.malware_val, spec.malware_test))
        train += healthy[:n_tr]
        val += healthy[n_tr : n_tr + n_va] + malware[:m_va]
        test += healthy[n_tr + n_va :] + malware[m_va:]
    return train, val, test


def classify_run(model: AeModel, run: LabeledRun, cfg: DetectorConfig) -> str:
    """Apply the per-PSD threshold to every row and the fraction rule
    over the whole run."""
    if cfg.model_id and cfg.model_id != run.benchmark_id:
        raise ValueError(
            f"model {cfg.model_id!r} does not match benchmark {run.benchmark_id!r}"
        )
    errors = reconstruction_errors(model, run.features)
    fraction = float(np.count_nonzero(errors > cfg.t_e)) / errors.size
    return "malware" if fraction > cfg.t_o else "healthy"


def weighted_f1(tp: int, fp: int, fn: int, w_m: float, w_h: float) -> float:
    """Class-weighted F1 over malware-detection counts."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be nonnegative")
    if w_m <= 0 or w_h <= 0:
        raise ValueError("weights must be positive")
    denom = 2.0 * tp * w_m + fp * w_h + fn * w_m
    if denom == 0:
        raise ValueError("weighted F1 undefined: tp, fp, and fn are all zero")
    return 2.0 * tp * w_m / denom


def rates(tp: int, fp: int, fn: int, tn: int):
    """(false-alarm rate, malware-miss rate) = (fp/(fp+tn), fn/(fn+tp))."""
    if fp + tn == 0:
        raise ValueError("false-alarm rate undefined: no healthy runs")
    if fn + tp == 0:
        raise ValueError("malware-miss rate undefined: no malware runs")
    return fp / (fp + tn), fn / (fn + tp)


@dataclass(frozen=True)
class EvalReport:
    """Per-benchmark and overall (fa, mm, f1, tp, fp, fn, tn) tuples."""

    per_benchmark: dict
    overall: tuple
    weights: tuple


def _confusion(results):
    tp = fp = fn = tn = 0
    for _, label, predicted in results:
        if label == "malware":
            tp += predicted == "malware"
            fn += predicted == "healthy"
        else:
            fp += predicted == "malware"
            tn += predicted == "healthy"
    return tp, fp, fn, tn


def _scope_row(results, weights):
    tp, fp, fn, tn = _confusion(results)
    n_malware = tp + fn
    n_healthy = fp + tn
    if weights is not None:
        w_m, w_h = weights
    else:
        # inverse class counts; a class absent from the scope gets weight 1
        w_m = 1.0 / n_malware if n_malware else 1.0
        w_h = 1.0 / n_healthy if n_healthy else 1.0
    # degenerate scopes: an absent class contributes a perfect rate, and a
    # scope with no malware evidence at all counts as a clean 1.0
    fa = fp / n_healthy if n_healthy else 0.0
    mm = fn / n_malware if n_malware else 0.0
    f1 = weighted_f1(tp, fp, fn, w_m, w_h) if (tp or fp or fn) else 1.0
    return (fa, mm, f1, tp, fp, fn, tn), (w_m, w_h)


def build_report(results, weights: tuple = None) -> EvalReport:
    """Aggregate (benchmark_id, label, predicted) triples into a report.

    ``weights`` overrides the default inverse-class-count rule with an
    explicit (w_m, w_h) pair applied to every scope.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    for _, label, predicted in results:
        if label not in LABELS or predicted not in LABELS:
            raise ValueError(f"labels must be in {LABELS}")
    per_benchmark = {}
    for bench in sorted({r[0] for r in results}):
        row, _ = _scope_row([r for r in results if r[0] == bench], weights)
        per_benchmark[bench] = row
    overall, used_weights = _scope_row(results, weights)
    return EvalReport(per_benchmark, overall, used_weights)


def report_to_csv(report: EvalReport) -> str:
    """Render the report in the shared CSV schema."""
    out = io.StringIO()
    out.write("benchmark_id,fa_rate,mm_rate,f1,tp,fp,fn,tn\n")
    rows = list(report.per_benchmark.items()) + [("overall", report.overall)]
    for bench, (fa, mm, f1, tp, fp, fn, tn) in rows:
        out.write(f"{bench},{fa:.3f},{mm:.3f},{f1:.3f},{tp},{fp},{fn},{tn}\n")
    return out.getvalue()


def report_to_text(report: EvalReport) -> str:
    """Aligned text table mirroring the CSV columns."""
    header = ("benchmark", "FA", "MM", "F1", "TP", "FP", "FN", "TN")
    rows = [header]
    items = list(report.per_benchmark.items()) + [("overall", report.overall)]
    for bench, (fa, mm, f1, tp, fp, fn, tn) in items:
        rows.append(
            (bench, f"{fa:.3f}", f"{mm:.3f}", f"{f1:.3f}",
             str(tp), str(fp), str(fn), str(tn))
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
