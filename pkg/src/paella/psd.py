"""Welch power-spectral-density features over sliding windows.

The feature extractor splits each analysis window into overlapping
segments, applies a periodic Hann window, computes a radix-2 FFT per
segment, and averages the one-sided periodograms. Density scaling is
1/(Fs * sum(w^2)) with a factor 2 on non-DC, non-Nyquist bins, so a
full-scale sine integrates to its mean-square power.

The FFT is an iterative decimation-in-time radix-2 transform working on
a batch axis, with bit-reversal permutations and per-stage twiddle
factors cached per transform size. Sizes are powers of two only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FeatureFormatError
from .trace import PowerTrace

FEATURE_MAGIC = b"PAEF"
_FEATURE_HEADER = struct.Struct("<4sQQdB")
_SCALE_CODES = {"db": 0, "linear": 1}
_SCALE_NAMES = {v: k for k, v in _SCALE_CODES.items()}

# transform size -> (bit-reversal index vector, per-stage twiddle arrays)
_FFT_TABLES: dict = {}
# (window_fn, length) -> window sample vector
_WINDOW_CACHE: dict = {}


@dataclass(frozen=True)
class WelchConfig:
    """Analysis geometry and output conventions for the PSD estimator."""

    window_len: int = 8192
    fft_len: int = 2048
    hop_len: int = 1024
    slide_len: int = 1000
    window_fn: str = "hann"
    output_scale: str = "db"
    db_floor: float = 1e-12

    def __post_init__(self):
        for name in ("window_len", "fft_len", "hop_len", "slide_len"):
            v = getattr(self, name)
            if int(v) < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.fft_len & (self.fft_len - 1):
            raise ValueError(f"fft_len must be a power of two, got {self.fft_len}")
        if self.fft_len > self.window_len:
            raise ValueError(
                f"fft_len {self.fft_len} exceeds window_len {self.window_len}"
            )
        if self.hop_len > self.fft_len:
            raise ValueError(
                f"hop_len {self.hop_len} exceeds fft_len {self.fft_len}"
            )
        if self.window_fn not in ("hann", "rect"):
            raise ValueError(f"window_fn must be 'hann' or 'rect', got {self.window_fn!r}")
        if self.output_scale not in ("db", "linear"):
            raise ValueError(
                f"output_scale must be 'db' or 'linear', got {self.output_scale!r}"
            )
        if not self.db_floor > 0:
            raise ValueError(f"db_floor must be positive, got {self.db_floor}")

    @property
    def segment_count(self) -> int:
        return (self.window_len - self.fft_len) // self.hop_len + 1

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1


@dataclass(frozen=True)
class PsdFeature:
    """One PSD estimate: fft_len/2 + 1 bins at bin_hz spacing."""

    bins: np.ndarray = field(repr=False)
    bin_hz: float
    window_start_ns: int

    def __post_init__(self):
        bins = np.ascontiguousarray(self.bins, dtype=np.float64)
        if bins.ndim != 1 or bins.size < 2:
            raise ValueError("bins must be a 1-D array of at least 2 values")
        if not np.all(np.isfinite(bins)):
            raise ValueError("bins contain non-finite values")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "bin_hz", float(self.bin_hz))
        object.__setattr__(self, "window_start_ns", int(self.window_start_ns))


def _fft_tables(n: int):
    cached = _FFT_TABLES.get(n)
    if cached is not None:
        return cached
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev = (rev << 1) | ((idx >> b) & 1)
    stages = []
    m = 2
    while m <= n:
        k = np.arange(m // 2)
        stages.append(np.exp(-2j * np.pi * k / m))
        m *= 2
    tables = (rev, stages)
    _FFT_TABLES[n] = tables
    return tables


def _fft_batch(x: np.ndarray) -> np.ndarray:
    """Radix-2 DIT FFT along the last axis of a (batch, n) array."""
    n = x.shape[-1]
    rev, stages = _fft_tables(n)
    y = np.asarray(x, dtype=np.complex128)[..., rev]
    batch = y.shape[0]
    for w in stages:
        m = 2 * w.size
        y = y.reshape(batch, n // m, m)
        even = y[:, :, : m // 2]
        odd = y[:, :, m // 2 :] * w
        y = np.concatenate([even + odd, even - odd], axis=2)
    return y.reshape(batch, n)


def fft_real(x, n: int) -> np.ndarray:
    """Length-n DFT of a real (or complex) vector; n must be a power of two."""
    if n < 1 or (n & (n - 1)):
        raise ValueError(f"n must be a power of two, got {n}")
    x = np.asarray(x)
    if x.ndim != 1 or x.size != n:
        raise ValueError(f"expected a length-{n} vector, got shape {x.shape}")
    return _fft_batch(x[None, :])[0]


def _window_vector(window_fn: str, n: int) -> np.ndarray:
    key = (window_fn, n)
    cached = _WINDOW_CACHE.get(key)
    if cached is None:
        if window_fn == "hann":
            # periodic form: DFT support is exactly bins {0, +-1}
            cached = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        else:
            cached = np.ones(n)
        cached.setflags(write=False)
        _WINDOW_CACHE[key] = cached
    return cached


def batch_windows(cfg: WelchConfig) -> int:
    """Windows per vectorized Welch batch.

    Caps the segment matrix at ~16k complex points so the FFT stage
    temporaries stay cache-resident; large fft_len configs degrade
    badly when batched wider. Per-row results do not depend on the
    batch size, every op is elementwise along rows.
    """
    return max(1, 16384 // (cfg.segment_count * cfg.fft_len))


def _welch_linear(
    windows: np.ndarray, cfg: WelchConfig, sample_rate_hz: float
) -> np.ndarray:
    """One-sided averaged periodograms for a (batch, window_len) array."""
    batch = windows.shape[0]
    n = cfg.fft_len
    starts = np.arange(cfg.segment_count) * cfg.hop_len
    seg_idx = starts[:, None] + np.arange(n)[None, :]
    segments = windows[:, seg_idx].reshape(batch * cfg.segment_count, n)
    w = _window_vector(cfg.window_fn, n)
    spec = _fft_batch(segments * w)[:, : n // 2 + 1]
    scale = 1.0 / (sample_rate_hz * np.sum(w * w))
    p = (spec.real * spec.real + spec.imag * spec.imag) * scale
    p[:, 1 : n // 2] *= 2.0
    return p.reshape(batch, cfg.segment_count, n // 2 + 1).mean(axis=1)


def _apply_scale(p: np.ndarray, cfg: WelchConfig) -> np.ndarray:
    if cfg.output_scale == "db":
        return 10.0 * np.log10(np.maximum(p, cfg.db_floor))
    return p


def welch_psd(samples, cfg: WelchConfig, sample_rate_hz: float) -> PsdFeature:
    """Welch estimate over exactly one analysis window of samples."""
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size != cfg.window_len:
        raise ValueError(
            f"expected {cfg.window_len} samples, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if sample_rate_hz <= 0:
        raise ValueError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    p = _apply_scale(_welch_linear(x[None, :], cfg, sample_rate_hz), cfg)[0]
    return PsdFeature(p, sample_rate_hz / cfg.fft_len, 0)


def sliding_psd(trace: PowerTrace, cfg: WelchConfig) -> list:
    """One PsdFeature per slide_len offset while a full window fits."""
    n = len(trace)
    if n < cfg.window_len:
        raise ValueError(
            f"trace has {n} samples, need at least window_len={cfg.window_len}"
        )
    count = (n - cfg.window_len) // cfg.slide_len + 1
    bin_hz = trace.sample_rate_hz / cfg.fft_len
    features = []
    chunk = batch_windows(cfg)
    for base in range(0, count, chunk):
        k = np.arange(base, min(base + chunk, count))
        starts = k * cfg.slide_len
        idx = starts[:, None] + np.arange(cfg.window_len)[None, :]
        p = _apply_scale(
            _welch_linear(trace.samples[idx], cfg, trace.sample_rate_hz), cfg
        )
        for row, s in zip(p, starts):
            ns = trace.t0_ns + int(round(s * 1_000_000_000 / trace.sample_rate_hz))
            features.append(PsdFeature(row, bin_hz, ns))
    return features


def feature_matrix(features) -> np.ndarray:
    """Stack a sequence of PsdFeature into a (rows, bins) float64 matrix."""
    return np.stack([f.bins for f in features]).astype(np.float64)


@dataclass(frozen=True)
class FeatureMatrix:
    """PSD rows plus the metadata needed to interpret them."""

    values: np.ndarray = field(repr=False)
    bin_hz: float
    scale: str = "db"

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("values must be a non-empty 2-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        if self.scale not in ("db", "linear"):
            raise ValueError(f"scale must be 'db' or 'linear', got {self.scale!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bin_hz", float(self.bin_hz))


def write_features(fm: FeatureMatrix, path, format: str = None) -> None:
    """Write a feature matrix as CSV or the raw_f64le matrix format."""
    fmt = format or _infer_feature_format(path)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# bin_hz={fm.bin_hz!r}\n")
            fh.write(f"# scale={fm.scale}\n")
            for row in fm.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif fmt == "raw_f64le":
        rows, cols = fm.values.shape
        with open(path, "wb") as fh:
            fh.write(
                _FEATURE_HEADER.pack(
                    FEATURE_MAGIC, rows, cols, fm.bin_hz, _SCALE_CODES[fm.scale]
                )
            )
            fh.write(np.ascontiguousarray(fm.values, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def read_features(path, format: str = None) -> FeatureMatrix:
    fmt = format or _infer_feature_format(path)
    if fmt == "csv":
        return _read_features_csv(path)
    if fmt == "raw_f64le":
        return _read_features_raw(path)
    raise ValueError(f"unknown feature format {fmt!r}")


def _infer_feature_format(path) -> str:
    return "csv" if str(path).endswith(".csv") else "raw_f64le"


def _read_features_csv(path) -> FeatureMatrix:
    bin_hz = None
    scale = "db"
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, _, raw = text.lstrip("# ").partition("=")
                key = key.strip()
                if key == "bin_hz":
                    try:
                        bin_hz = float(raw)
                    except ValueError as exc:
                        raise FeatureFormatError(
                            f"{path}: malformed bin_hz at line {lineno}"
                        ) from exc
                elif key == "scale":
                    scale = raw.strip()
                continue
            try:
                row = [float(v) for v in text.split(",")]
            except ValueError as exc:
                raise FeatureFormatError(
                    f"{path}: bad value at line {lineno}"
                ) from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FeatureFormatError(
                    f"{path}: row at line {lineno} has {len(row)} values, "
                    f"expected {width}"
                )
            rows.append(row)
    if bin_hz is None:
        raise FeatureFormatError(f"{path}: missing bin_hz header")
    if not rows:
        raise FeatureFormatError(f"{path}: no feature rows")
    try:
        return FeatureMatrix(np.asarray(rows), bin_hz, scale)
    except ValueError as exc:
        raise FeatureFormatError(f"{path}: {exc}") from exc


def _read_features_raw(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(_FEATURE_HEADER.size)
        if len(header) < _FEATURE_HEADER.size:
            raise FeatureFormatError(f"{path}: truncated header")
        magic, rows, cols, bin_hz, scale_code = _FEATURE_HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise FeatureFormatError(f"{path}: bad magic {magic!r}")
        if scale_code not in _SCALE_NAMES:
            raise FeatureFormatError(f"{path}: unknown scale code {scale_code}")
        body = fh.read()
    expected = rows * cols * 8
    if len(body) != expected:
        raise FeatureFormatError(
            f"{path}: expected {expected} data bytes, found {len(body)}"
        )
    values = np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()
    try:
        return FeatureMatrix(values, bin_hz, _SCALE_NAMES[scale_code])
    except ValueError as exc:
        raise FeatureFormatError(f"{path}: {exc}") from exc
