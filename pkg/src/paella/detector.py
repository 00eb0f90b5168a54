"""Two-threshold anomaly decision rule and the streaming runtime.

A PSD is an outlier when its reconstruction error exceeds t_e
(strictly); a batch of PSDs is malware when the outlier fraction
exceeds t_o (strictly). Boundary values never alarm.

``run_stream`` feeds a chunked sample stream through the sliding-window
PSD stage and the model, emitting one verdict per ``batch_psds`` PSDs
and a final partial verdict at stream end. Reconstruction errors are
computed one row at a time so a streamed trace reproduces the offline
``sliding_psd`` + ``reconstruction_error`` results bit-exactly,
regardless of how the stream was chunked.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import AeModel, forward, standardize
from .psd import PsdFeature, WelchConfig, _apply_scale, _welch_linear, batch_windows
from .trace import PowerTrace


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds of the decision rule plus the batch geometry."""

    t_e: float = 0.91
    t_o: float = 0.30
    batch_psds: int = 500
    model_id: str = ""

    def __post_init__(self):
        if not self.t_e > 0:
            raise ValueError(f"t_e must be positive, got {self.t_e}")
        if not 0 < self.t_o < 1:
            raise ValueError(f"t_o must lie in (0, 1), got {self.t_o}")
        if int(self.batch_psds) < 1:
            raise ValueError(f"batch_psds must be >= 1, got {self.batch_psds}")
        object.__setattr__(self, "batch_psds", int(self.batch_psds))


@dataclass(frozen=True)
class BatchVerdict:
    """Decision over one batch of consecutive PSDs."""

    outlier_count: int
    total: int
    outlier_fraction: float
    decision: str
    window_span_ns: tuple
    per_psd_errors: tuple
    partial: bool = False
    model_id: str = ""

    def __post_init__(self):
        if self.total < 1 or not 0 <= self.outlier_count <= self.total:
            raise ValueError(
                f"bad counts: {self.outlier_count} outliers of {self.total}"
            )
        if self.decision not in ("healthy", "malware"):
            raise ValueError(f"decision must be healthy/malware, got {self.decision!r}")
        object.__setattr__(self, "window_span_ns", tuple(self.window_span_ns))
        object.__setattr__(self, "per_psd_errors", tuple(self.per_psd_errors))


def _feature_row(psd) -> np.ndarray:
    return psd.bins if isinstance(psd, PsdFeature) else np.asarray(psd, dtype=np.float64)


def reconstruction_error(model: AeModel, psd) -> float:
    """Mean squared error between the standardized PSD and its reconstruction."""
    if model.standardizer is None or not model.standardizer.fitted:
        raise ValueError("model has no fitted standardizer")
    x = standardize(model.standardizer, _feature_row(psd))
    y, _ = forward(model, x)
    return float(np.mean((x - y) ** 2))


def reconstruction_errors(model: AeModel, rows) -> np.ndarray:
    """Vectorized reconstruction error over a (rows, bins) matrix."""
    if model.standardizer is None or not model.standardizer.fitted:
        raise ValueError("model has no fitted standardizer")
    x = standardize(model.standardizer, np.atleast_2d(np.asarray(rows, dtype=np.float64)))
    y, _ = forward(model, x)
    return np.mean((x - y) ** 2, axis=1)


def classify_psd(err: float, cfg: DetectorConfig) -> str:
    """'outlier' iff err > t_e, strictly; the boundary is an inlier."""
    return "outlier" if err > cfg.t_e else "inlier"


def batch_decision(
    errors,
    cfg: DetectorConfig,
    window_span_ns: tuple = (0, 0),
    partial: bool = False,
    model_id: str = None,
) -> BatchVerdict:
    """Count outliers and apply the strict outlier-fraction rule."""
    errors = tuple(float(e) for e in errors)
    if not errors:
        raise ValueError("empty batch")
    outliers = sum(1 for e in errors if e > cfg.t_e)
    fraction = outliers / len(errors)
    decision = "malware" if fraction > cfg.t_o else "healthy"
    return BatchVerdict(
        outlier_count=outliers,
        total=len(errors),
        outlier_fraction=fraction,
        decision=decision,
        window_span_ns=window_span_ns,
        per_psd_errors=errors,
        partial=partial,
        model_id=cfg.model_id if model_id is None else model_id,
    )


def calibrate_threshold(model: AeModel, validation_features, percentile: float = 99.0) -> float:
    """Nearest-rank percentile of healthy-validation reconstruction errors."""
    rows = np.atleast_2d(np.asarray(validation_features, dtype=np.float64))
    if rows.shape[0] < 10:
        raise ValueError(f"need at least 10 validation rows, got {rows.shape[0]}")
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    errors = np.sort(reconstruction_errors(model, rows))
    rank = math.ceil(percentile / 100.0 * errors.size)  # nearest-rank definition
    return float(errors[rank - 1])


def replay(trace: PowerTrace, speed: float = 1.0, chunk_samples: int = None):
    """Yield a trace as chunked sample arrays, paced to the replay speed.

    speed 1.0 approximates real time, 0 is as fast as possible. The
    pacing schedule is absolute so sleep jitter does not accumulate.
    """
    if speed < 0:
        raise ValueError(f"speed must be >= 0, got {speed}")
    if chunk_samples is None:
        chunk_samples = 262_144 if speed == 0 else max(1, int(0.1 * trace.sample_rate_hz))
    start = time.monotonic()
    sent = 0
    n = len(trace)
    while sent < n:
        chunk = trace.samples[sent : sent + chunk_samples]
        sent += len(chunk)
        if speed > 0:
            due = start + (sent / trace.sample_rate_hz) / speed
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        yield chunk


def run_stream(
    trace_source,
    model: AeModel,
    welch_cfg: WelchConfig,
    cfg: DetectorConfig,
    sink,
    sample_rate_hz: float = None,
    t0_ns: int = 0,
    model_supplier=None,
) -> None:
    """Stream samples through PSD extraction and the decision rule.

    ``trace_source`` yields 1-D sample arrays or PowerTrace chunks (the
    first chunk's rate/t0 apply when not given explicitly; all chunks
    must agree on the rate). One PSD is emitted per ``slide_len`` new
    samples once the first full window exists; one verdict per
    ``batch_psds`` PSDs goes to ``sink``, plus a final partial verdict
    for a non-empty remainder at stream end.

    ``model_supplier``, when given, is consulted at every batch boundary
    and returns the (model, model_id) to use for the next batch, so a
    model swap never lands inside a batch.
    """
    window = welch_cfg.window_len
    slide = welch_cfg.slide_len

    def current():
        if model_supplier is not None:
            return model_supplier()
        return model, cfg.model_id

    active_model, active_id = current()
    buf = np.empty(0, dtype=np.float64)
    consumed = 0  # absolute index of buf[0] in the stream
    next_start = 0  # absolute index of the next window start
    errors = []
    span_start_ns = None
    rate = sample_rate_hz

    def sample_ns(i: int) -> int:
        return t0_ns + int(round(i * 1_000_000_000 / rate))

    def flush(partial: bool):
        nonlocal errors, span_start_ns, active_model, active_id
        if errors:
            sink(
                batch_decision(
                    errors,
                    cfg,
                    window_span_ns=(span_start_ns, sample_ns(next_start - slide + window)),
                    partial=partial,
                    model_id=active_id,
                )
            )
            errors = []
            span_start_ns = None
            active_model, active_id = current()

    for chunk in trace_source:
        if isinstance(chunk, PowerTrace):
            if rate is None:
                rate = chunk.sample_rate_hz
                t0_ns = chunk.t0_ns
            elif chunk.sample_rate_hz != rate:
                raise ValueError(
                    f"sample-rate mismatch in stream: {chunk.sample_rate_hz} vs {rate}"
                )
            data = chunk.samples
        else:
            data = np.ascontiguousarray(chunk, dtype=np.float64)
            if rate is None:
                raise ValueError("sample_rate_hz is required for raw array chunks")
        buf = np.concatenate([buf, data]) if buf.size else data.copy()

        while buf.size - (next_start - consumed) >= window:
            # all full windows currently buffered, capped at the batch boundary
            avail = (buf.size - (next_start - consumed) - window) // slide + 1
            take = min(avail, cfg.batch_psds - len(errors), batch_windows(welch_cfg))
            starts = next_start - consumed + np.arange(take) * slide
            idx = starts[:, None] + np.arange(window)[None, :]
            psds = _apply_scale(_welch_linear(buf[idx], welch_cfg, rate), welch_cfg)
            if span_start_ns is None:
                span_start_ns = sample_ns(next_start)
            for row in psds:
                errors.append(reconstruction_error(active_model, row))
            next_start += take * slide
            if len(errors) >= cfg.batch_psds:
                flush(partial=False)
            # drop samples no window can need any more
            drop = next_start - consumed
            if drop > 0:
                buf = buf[drop:]
                consumed = next_start
    flush(partial=True)
