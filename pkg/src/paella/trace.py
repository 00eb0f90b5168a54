"""Power-trace data model, file I/O, and acquisition-model transforms.

A trace is a fixed-rate stream of instantaneous power samples (watts).
Two on-disk formats are supported:

* ``csv``: optional ``# sample_rate_hz=<float>`` / ``# t0_ns=<int>``
  comment lines, then one decimal power value per line, LF-terminated.
* ``raw_f64le``: 24-byte header (magic ``PAE1``, sample rate as
  little-endian IEEE-754 float64, t0 as signed little-endian int64)
  followed by the samples as little-endian float64.

``decimate_avg`` models the acquisition front end: the sensor samples
fast (e.g. 800 kS/s) and a hardware averager emits one sample per block
of ``avg_factor`` inputs (16 -> 50 kS/s), raising effective precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import TraceFormatError

RAW_MAGIC = b"PAE1"
_RAW_HEADER = struct.Struct("<4sdq")

DEFAULT_SAMPLE_RATE_HZ = 50_000.0


@dataclass(frozen=True)
class PowerTrace:
    """Immutable timestamped stream of power samples at a fixed rate."""

    sample_rate_hz: float
    t0_ns: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        rate = float(self.sample_rate_hz)
        if not np.isfinite(rate) or rate <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {rate}")
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "sample_rate_hz", rate)
        object.__setattr__(self, "t0_ns", int(self.t0_ns))
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class DecimationSpec:
    """Oversample-and-average decimation: one output per ``avg_factor`` inputs."""

    avg_factor: int

    def __post_init__(self):
        if int(self.avg_factor) < 1:
            raise ValueError(f"avg_factor must be >= 1, got {self.avg_factor}")
        object.__setattr__(self, "avg_factor", int(self.avg_factor))


def decimate_avg(trace: PowerTrace, spec: DecimationSpec) -> PowerTrace:
    """Average consecutive blocks of ``avg_factor`` samples.

    Output length is ``floor(len/avg_factor)``; a trailing partial block
    is discarded (hardware averagers emit full blocks only). The output
    rate is the input rate divided by the factor.
    """
    f = spec.avg_factor
    n = len(trace)
    if n < f:
        raise ValueError(f"trace has {n} samples, need at least avg_factor={f}")
    m = n // f
    out = trace.samples[: m * f].reshape(m, f).mean(axis=1)
    return PowerTrace(trace.sample_rate_hz / f, trace.t0_ns, out)


def read_trace(path, format: str = None) -> PowerTrace:
    """Read a trace file; format is inferred from the extension when omitted."""
    fmt = format or _infer_format(path)
    if fmt == "csv":
        return _read_csv(path)
    if fmt == "raw_f64le":
        return _read_raw(path)
    raise ValueError(f"unknown trace format {fmt!r}")


def write_trace(trace: PowerTrace, path, format: str = None) -> None:
    """Write a trace file; raw_f64le round-trips bit-exactly."""
    fmt = format or _infer_format(path)
    if fmt == "csv":
        _write_csv(trace, path)
    elif fmt == "raw_f64le":
        _write_raw(trace, path)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def _infer_format(path) -> str:
    return "csv" if str(path).endswith(".csv") else "raw_f64le"


def _read_csv(path) -> PowerTrace:
    rate = DEFAULT_SAMPLE_RATE_HZ
    t0_ns = 0
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, _, raw = text.lstrip("# ").partition("=")
                key = key.strip()
                try:
                    if key == "sample_rate_hz":
                        rate = float(raw)
                    elif key == "t0_ns":
                        t0_ns = int(raw)
                except ValueError as exc:
                    raise TraceFormatError(
                        f"{path}: malformed header at line {lineno}: {text!r}"
                    ) from exc
                continue
            try:
                value = float(text)
            except ValueError as exc:
                raise TraceFormatError(
                    f"{path}: bad sample at line {lineno}: {text!r}"
                ) from exc
            if not np.isfinite(value):
                raise TraceFormatError(f"{path}: non-finite sample at row {len(values)}")
            values.append(value)
    if not values:
        raise TraceFormatError(f"{path}: no samples")
    return PowerTrace(rate, t0_ns, np.asarray(values))


def _write_csv(trace: PowerTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# sample_rate_hz={trace.sample_rate_hz!r}\n")
        fh.write(f"# t0_ns={trace.t0_ns}\n")
        for v in trace.samples:
            fh.write(f"{float(v)!r}\n")


def _read_raw(path) -> PowerTrace:
    with open(path, "rb") as fh:
        header = fh.read(_RAW_HEADER.size)
        if len(header) < _RAW_HEADER.size:
            raise TraceFormatError(f"{path}: truncated header")
        magic, rate, t0_ns = _RAW_HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise TraceFormatError(f"{path}: bad magic {magic!r}")
        body = fh.read()
    if len(body) % 8 != 0:
        raise TraceFormatError(f"{path}: truncated sample data")
    samples = np.frombuffer(body, dtype="<f8")
    if samples.size == 0:
        raise TraceFormatError(f"{path}: no samples")
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise TraceFormatError(f"{path}: non-finite sample at row {bad}")
    return PowerTrace(rate, t0_ns, samples.copy())


def _write_raw(trace: PowerTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, trace.sample_rate_hz, trace.t0_ns))
        fh.write(np.ascontiguousarray(trace.samples, dtype="<f8").tobytes())
