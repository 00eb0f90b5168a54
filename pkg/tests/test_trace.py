"""Trace data model, file round-trips, and decimation arithmetic."""

import struct

import numpy as np
import pytest

from paella import (
    DecimationSpec,
    PowerTrace,
    TraceFormatError,
    decimate_avg,
    read_trace,
    write_trace,
)


def test_construction_rejects_bad_rate():
    with pytest.raises(ValueError):
        PowerTrace(0.0, 0, np.ones(4))
    with pytest.raises(ValueError):
        PowerTrace(-50000.0, 0, np.ones(4))


def test_construction_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        PowerTrace(50000.0, 0, np.array([]))
    with pytest.raises(ValueError):
        PowerTrace(50000.0, 0, np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        PowerTrace(50000.0, 0, np.array([np.inf, 1.0]))


def test_samples_are_immutable():
    t = PowerTrace(50000.0, 0, np.arange(4.0))
    with pytest.raises(ValueError):
        t.samples[0] = 9.0


def test_csv_parse_three_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# sample_rate_hz=50000\n# t0_ns=12\n1.0\n2.5\n-0.5\n")
    t = read_trace(p)
    assert len(t) == 3
    assert t.sample_rate_hz == 50000.0
    assert t.t0_ns == 12
    assert list(t.samples) == [1.0, 2.5, -0.5]


def test_csv_defaults_when_headers_absent(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1.0\n2.0\n")
    t = read_trace(p)
    assert t.sample_rate_hz == 50000.0
    assert t.t0_ns == 0


def test_csv_nan_reports_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1.0\n2.0\nnan\n")
    with pytest.raises(TraceFormatError, match="non-finite sample at row 2"):
        read_trace(p)


def test_csv_malformed_value(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1.0\npotato\n")
    with pytest.raises(TraceFormatError, match="line 2"):
        read_trace(p)


def test_csv_empty_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# sample_rate_hz=50000\n")
    with pytest.raises(TraceFormatError, match="no samples"):
        read_trace(p)


def test_raw_sixteen_bytes_after_header_is_two_samples(tmp_path):
    p = tmp_path / "t.pae"
    payload = struct.pack("<4sdq", b"PAE1", 50000.0, 0) + struct.pack("<2d", 1.5, -2.5)
    p.write_bytes(payload)
    t = read_trace(p)
    assert len(t) == 2
    assert list(t.samples) == [1.5, -2.5]


def test_raw_bad_magic(tmp_path):
    p = tmp_path / "t.pae"
    p.write_bytes(b"NOPE" + b"\0" * 20 + struct.pack("<d", 1.0))
    with pytest.raises(TraceFormatError, match="magic"):
        read_trace(p)


def test_raw_truncated_header(tmp_path):
    p = tmp_path / "t.pae"
    p.write_bytes(b"PAE1\0\0")
    with pytest.raises(TraceFormatError, match="truncated"):
        read_trace(p)


def test_raw_truncated_samples(tmp_path):
    p = tmp_path / "t.pae"
    p.write_bytes(struct.pack("<4sdq", b"PAE1", 50000.0, 0) + b"\0" * 11)
    with pytest.raises(TraceFormatError, match="truncated"):
        read_trace(p)


def test_raw_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    t = PowerTrace(50000.0, 123456789, rng.normal(size=8192))
    p = tmp_path / "t.pae"
    write_trace(t, p)
    back = read_trace(p)
    assert back.sample_rate_hz == t.sample_rate_hz
    assert back.t0_ns == t.t0_ns
    assert back.samples.tobytes() == t.samples.tobytes()


def test_csv_roundtrip_exact_values(tmp_path):
    # repr round-trips float64 exactly, so CSV is value-exact too
    rng = np.random.default_rng(6)
    t = PowerTrace(12345.5, -42, rng.normal(size=50))
    p = tmp_path / "t.csv"
    write_trace(t, p)
    back = read_trace(p)
    assert back.sample_rate_hz == t.sample_rate_hz
    assert back.t0_ns == t.t0_ns
    assert back.samples.tobytes() == t.samples.tobytes()


def test_format_inference_and_explicit_override(tmp_path):
    t = PowerTrace(50000.0, 0, np.arange(3.0))
    p = tmp_path / "weird.bin"
    write_trace(t, p, format="csv")
    assert read_trace(p, format="csv").samples.tolist() == [0.0, 1.0, 2.0]


def test_write_unwritable_path_raises():
    t = PowerTrace(50000.0, 0, np.ones(3))
    with pytest.raises(OSError):
        write_trace(t, "/nonexistent-dir/t.pae")


def test_decimation_spec_validation():
    with pytest.raises(ValueError):
        DecimationSpec(0)
    assert DecimationSpec(16).avg_factor == 16


def test_decimate_800k_to_50k():
    t = PowerTrace(800_000.0, 0, np.ones(1600))
    out = decimate_avg(t, DecimationSpec(16))
    assert out.sample_rate_hz == 50_000.0
    assert len(out) == 100


def test_decimate_block_mean_hand_value():
    t = PowerTrace(800_000.0, 0, np.arange(16.0))
    out = decimate_avg(t, DecimationSpec(16))
    assert len(out) == 1
    assert out.samples[0] == 7.5  # mean of 0..15


def test_decimate_constant_stays_constant():
    t = PowerTrace(50000.0, 0, np.full(103, 3.25))
    out = decimate_avg(t, DecimationSpec(4))
    assert len(out) == 25  # trailing partial block of 3 discarded
    assert np.all(out.samples == 3.25)


def test_decimate_shorter_than_factor_errors():
    t = PowerTrace(50000.0, 0, np.ones(7))
    with pytest.raises(ValueError):
        decimate_avg(t, DecimationSpec(8))


def test_decimate_linear_exact_on_dyadic_values():
    # dyadic values keep averaging exact, so linearity holds bit-for-bit
    rng = np.random.default_rng(7)
    x = rng.integers(-8, 8, size=64).astype(np.float64) / 4.0
    y = rng.integers(-8, 8, size=64).astype(np.float64) / 4.0
    a, b = 2.0, 0.5
    tx = PowerTrace(800.0, 0, x)
    ty = PowerTrace(800.0, 0, y)
    lhs = decimate_avg(PowerTrace(800.0, 0, a * x + b * y), DecimationSpec(4))
    rhs = a * decimate_avg(tx, DecimationSpec(4)).samples + b * decimate_avg(
        ty, DecimationSpec(4)
    ).samples
    assert lhs.samples.tolist() == rhs.tolist()


def test_decimate_linear_general_close():
    rng = np.random.default_rng(8)
    x = rng.normal(size=4096)
    y = rng.normal(size=4096)
    lhs = decimate_avg(PowerTrace(800.0, 0, 1.7 * x - 0.3 * y), DecimationSpec(16))
    rhs = (
        1.7 * decimate_avg(PowerTrace(800.0, 0, x), DecimationSpec(16)).samples
        - 0.3 * decimate_avg(PowerTrace(800.0, 0, y), DecimationSpec(16)).samples
    )
    np.testing.assert_allclose(lhs.samples, rhs, rtol=1e-12, atol=1e-12)


def test_decimate_reduces_white_noise_variance():
    rng = np.random.default_rng(9)
    x = rng.normal(size=160_000)
    t = PowerTrace(800_000.0, 0, x)
    out = decimate_avg(t, DecimationSpec(16))
    # var of 16-sample means is ~1/16; 5 sigma of the estimator stays below 1
    assert out.samples.var() < x.var()
    assert out.samples.var() < 1.0 / 16.0 * 2.0


def test_duration_property():
    t = PowerTrace(50000.0, 0, np.ones(8192))
    assert t.duration_s == pytest.approx(0.16384)
