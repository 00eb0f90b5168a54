"""Comparison baselines for PSD-feature malware detection.

One-class SVM (standardize + PCA to 25 components, polynomial kernel,
gamma 0.1) and Isolation Forest (standardize only, contamination
"auto"), each with the 30 % run-level outlier rule. Consumes feature
CSVs and run manifests exported by the detection pipeline; emits the
shared report schema.
"""

from .io import read_feature_csv, read_manifest
from .model import (
    METHODS,
    BaselineConfig,
    BaselineHandle,
    classify_run_baseline,
    fit_baseline,
    load_handle,
    predict_outliers,
    save_handle,
)
from .report import (
    DECISIONS_HEADER,
    REPORT_HEADER,
    read_decisions,
    report_csv,
    weighted_f1,
    write_decisions,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BaselineHandle",
    "DECISIONS_HEADER",
    "METHODS",
    "REPORT_HEADER",
    "classify_run_baseline",
    "fit_baseline",
    "load_handle",
    "predict_outliers",
    "read_decisions",
    "read_feature_csv",
    "read_manifest",
    "report_csv",
    "save_handle",
    "weighted_f1",
    "write_decisions",
]
