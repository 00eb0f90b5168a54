"""Fit and apply the comparison detectors.

Both methods train on healthy feature rows only. Classification keeps
the same run-level rule as the reference detector: a run is malware
when the fraction of outlier rows exceeds the threshold (default 0.30,
strictly greater).
"""

import pickle
from dataclasses import dataclass, field

import numpy as np
from sklearn.decomposition import PCA
from sklearn.ensemble import IsolationForest
from sklearn.preprocessing import StandardScaler
from sklearn.svm import OneClassSVM

METHODS = ("ocsvm", "iforest")

# The original tuning states gamma, the PCA width, and "auto"
# contamination but not nu; sklearn's 0.5 default marks half the
# training set as margin outliers, which the 30 % run rule would read
# as malware on every healthy run, so a tighter bound is assumed here.
DEFAULT_NU = 0.1


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    pca_components: int = None  # None means the method default
    gamma: float = 0.1
    nu: float = DEFAULT_NU
    contamination: str = "auto"
    outlier_threshold: float = 0.30
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.pca_components is not None and int(self.pca_components) < 1:
            raise ValueError(
                f"pca_components must be >= 1 or None, got {self.pca_components}"
            )
        if not 0 < self.outlier_threshold < 1:
            raise ValueError(
                f"outlier_threshold must lie in (0, 1), got {self.outlier_threshold}"
            )
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.nu <= 1:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.contamination != "auto":
            raise ValueError(f"contamination must be 'auto', got {self.contamination!r}")

    @property
    def effective_pca(self):
        """oc-SVM reduces to 25 components by default; IF skips PCA."""
        if self.pca_components is not None:
            return int(self.pca_components)
        return 25 if self.method == "ocsvm" else None


@dataclass(frozen=True)
class BaselineHandle:
    """Fitted preprocessing + estimator, ready to score runs."""

    config: BaselineConfig
    scaler: object = field(repr=False)
    pca: object = field(repr=False)
    estimator: object = field(repr=False)
    n_features: int = 0


def fit_baseline(train_rows, cfg: BaselineConfig) -> BaselineHandle:
    """Fit scaler [+ PCA] + detector on healthy-only training rows."""
    x = np.ascontiguousarray(train_rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(
            f"degenerate training matrix: need >= 2 feature rows, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("degenerate training matrix: non-finite values")
    n_pca = cfg.effective_pca
    if n_pca is not None and n_pca > min(x.shape):
        raise ValueError(
            f"pca_components={n_pca} exceeds the training matrix "
            f"(shape {x.shape})"
        )

    scaler = StandardScaler().fit(x)
    z = scaler.transform(x)
    pca = None
    if n_pca is not None:
        pca = PCA(n_components=n_pca, random_state=cfg.seed).fit(z)
        z = pca.transform(z)
    if cfg.method == "ocsvm":
        estimator = OneClassSVM(kernel="poly", gamma=cfg.gamma, nu=cfg.nu)
    else:
        estimator = IsolationForest(
            contamination=cfg.contamination, random_state=cfg.seed
        )
    estimator.fit(z)
    return BaselineHandle(cfg, scaler, pca, estimator, x.shape[1])


def predict_outliers(handle: BaselineHandle, rows) -> np.ndarray:
    """Boolean outlier flag per feature row."""
    x = np.ascontiguousarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != handle.n_features:
        raise ValueError(
            f"feature rows have shape {x.shape}, expected (*, {handle.n_features})"
        )
    z = handle.scaler.transform(x) if handle.scaler is not None else x
    if handle.pca is not None:
        z = handle.pca.transform(z)
    return handle.estimator.predict(z) == -1


def classify_run_baseline(handle: BaselineHandle, rows):
    """Label one run: malware iff the outlier fraction exceeds the threshold.

    Returns (label, outlier_fraction).
    """
    flags = predict_outliers(handle, rows)
    fraction = float(np.count_nonzero(flags)) / flags.size
    label = "malware" if fraction > handle.config.outlier_threshold else "healthy"
    return label, fraction


def save_handle(handle: BaselineHandle, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump(handle, fh)


def load_handle(path) -> BaselineHandle:
    with open(path, "rb") as fh:
        handle = pickle.load(fh)
    if not isinstance(handle, BaselineHandle):
        raise ValueError(f"{path} does not contain a fitted baseline")
    return handle
