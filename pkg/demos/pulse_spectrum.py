"""Spectral resolution check with a known signal.

A square-wave compute load at 1 kHz puts energy at its fundamental and
harmonics. If the PSD front end is honest, the fundamental lands in the
right bin, towers over the noise floor, and the harmonics show up as
local peaks. This script renders that spectrum as numbers you can eyeball.

Run: python3 demos/pulse_spectrum.py
"""

import numpy as np

import paella

RATE = 50_000.0

spec = paella.PulseTrainSpec(
    freq_hz=1000.0, duty=0.25, high_w=1.0, low_w=0.0,
    duration_s=8192 / RATE,  # exactly one analysis window
)
trace = paella.gen_pulse_train(spec)
print(f"pulse train: {spec.freq_hz:.0f} Hz, duty {spec.duty}, "
      f"{len(trace)} samples at {RATE:.0f} S/s")

cfg = paella.WelchConfig()  # 8192-sample window, 2048-point FFT, 1025 bins
feat = paella.welch_psd(trace.samples, cfg, RATE)
db = feat.bins
print(f"PSD: {db.size} bins, {feat.bin_hz:.3f} Hz per bin\n")

# the window leaks the DC level into bins 0 and 1, skip both
peak = 2 + int(np.argmax(db[2:]))
median = float(np.median(np.delete(db[2:], peak - 2)))
print(f"strongest non-DC bin: {peak}  ({peak * feat.bin_hz:.1f} Hz), "
      f"{db[peak] - median:+.1f} dB over the median bin")

print("\nharmonic neighborhood (dB):")
for f in (1000.0, 2000.0, 3000.0, 4000.0):
    b = int(round(f / feat.bin_hz))
    local_max = db[b] > db[b - 1] and db[b] > db[b + 1]
    cells = " ".join(f"{db[i]:7.1f}" for i in (b - 2, b - 1, b, b + 1, b + 2))
    print(f"  {f:6.0f} Hz -> bin {b:4d}  [{cells}]  "
          f"{'local max' if local_max else '-'}")

# a crude terminal spectrogram of the first 200 bins
print("\n|" + "".join(
    " .:-=+*#%@"[min(9, max(0, int((v - db[2:202].min()) / 12)))]
    for v in db[2:202]
) + "|  bins 2..201")
