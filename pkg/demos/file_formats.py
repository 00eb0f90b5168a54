"""Tour of the on-disk formats.

Traces, feature matrices, and models all have both a human-readable
form and a compact binary form. Round trips are bit-exact, which is
what makes results reproducible across machines: a trace captured on a
meter, featurized on a gateway, and scored in a lab gives identical
numbers everywhere.

Run: python3 demos/file_formats.py
"""

import tempfile
from pathlib import Path

import numpy as np

import paella

workdir = Path(tempfile.mkdtemp(prefix="formats-demo-"))
rng = np.random.default_rng(0)

# --- traces: CSV with header comments, or raw little-endian doubles
trace = paella.PowerTrace(50_000.0, 1_700_000_000_000_000_000,
                          100.0 + rng.standard_normal(4096))
paella.write_trace(trace, workdir / "trace.csv")
paella.write_trace(trace, workdir / "trace.pae")
back = paella.read_trace(workdir / "trace.pae")
print("trace.csv head:")
for line in (workdir / "trace.csv").read_text().splitlines()[:4]:
    print("   " + line)
print(f"raw round trip bit-exact: "
      f"{back.samples.tobytes() == trace.samples.tobytes()}")
print(f"sizes: csv {(workdir / 'trace.csv').stat().st_size:,} B, "
      f"raw {(workdir / 'trace.pae').stat().st_size:,} B\n")

# --- features: same deal, CSV or binary matrix
cfg = paella.WelchConfig(window_len=1024, fft_len=256, hop_len=128, slide_len=100)
fm = paella.FeatureMatrix(
    paella.feature_matrix(paella.sliding_psd(trace, cfg)),
    bin_hz=trace.sample_rate_hz / cfg.fft_len,
    scale="db",
)
paella.write_features(fm, workdir / "features.csv")
paella.write_features(fm, workdir / "features.paef")
got = paella.read_features(workdir / "features.paef")
print(f"features: {fm.values.shape[0]} rows x {fm.values.shape[1]} bins, "
      f"bin width {fm.bin_hz:.3f} Hz")
print(f"binary round trip bit-exact: "
      f"{got.values.tobytes() == fm.values.tobytes()}")
print(f"sizes: csv {(workdir / 'features.csv').stat().st_size:,} B, "
      f"binary {(workdir / 'features.paef').stat().st_size:,} B\n")

# --- models: dims, activations, weights, standardizer, all in one file
model = paella.train(fm.values, paella.TrainConfig(epochs=1),
                     layer_dims=(129, 8, 4, 4, 129))
paella.save_model(model, workdir / "model.paem")
loaded = paella.load_model(workdir / "model.paem")
probe = rng.standard_normal((8, 129))
same = (paella.forward(model, probe)[0].tobytes()
        == paella.forward(loaded, probe)[0].tobytes())
print(f"model: dims {model.layer_dims}, {model.n_params} parameters, "
      f"{(workdir / 'model.paem').stat().st_size:,} B on disk")
print(f"loaded model reproduces outputs bit-exactly: {same}")
print(f"\nall files under {workdir}")
