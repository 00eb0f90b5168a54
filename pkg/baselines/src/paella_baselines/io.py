"""Readers for the detector pipeline's exported file formats.

This package deliberately talks to the detection pipeline only through
files: feature CSVs, run manifests, and the shared report schema. The
parsers here implement those format contracts independently, so the two
packages stay decoupled at the interface.
"""

import os

import numpy as np

LABELS = ("healthy", "malware")


def read_feature_csv(path) -> np.ndarray:
    """Load one exported feature matrix (rows of PSD bins).

    Format: optional ``# key=value`` header lines (bin_hz, scale),
    then one comma-separated row of floats per line.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}: bad value on line {lineno}: {exc}")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(
                    f"{path}: row at line {lineno} has {len(row)} values, "
                    f"expected {width}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def read_manifest(path) -> list:
    """Parse a run manifest into (run_id, benchmark_id, label, path) tuples.

    Tab-separated, ``#`` comments allowed, feature paths resolved
    relative to the manifest file.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, "
                    f"got {len(fields)}"
                )
            run_id, benchmark_id, label, rel = (f.strip() for f in fields)
            if label not in LABELS:
                raise ValueError(
                    f"{path}:{lineno}: label must be healthy/malware, got {label!r}"
                )
            entries.append((run_id, benchmark_id, label, os.path.join(base, rel)))
    if not entries:
        raise ValueError(f"{path}: empty manifest")
    return entries
