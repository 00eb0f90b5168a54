"""Synthetic power-trace generation: pulse trains, tonal signatures, noise.

These generators stand in for real benchmark workloads so the full
pipeline can be exercised at desk scale. Everything is a deterministic
function of its spec, including the noise.

Noise PRNG (fixed, so golden traces reproduce across implementations):
"xorshift64* counter" Gaussian stream. For counter ``c`` (0-based) and
integer ``seed``, all arithmetic mod 2**64::

    s = seed + (c + 1) * 0x9E3779B97F4A7C15
    x = s;  x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
    y = x * 0x2545F4914F6CDD1D
    u(c) = ((y >> 11) + 1) * 2.0**-53          # uniform in (0, 1]

Gaussian sample ``i`` is Box-Muller over counters ``2i`` and ``2i+1``::

    z(i) = sqrt(-2 ln u(2i)) * cos(2 pi u(2i+1))

The counter construction means sample ``i`` is independent of how many
samples were drawn before it; traces of different lengths share a prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trace import DEFAULT_SAMPLE_RATE_HZ, PowerTrace

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STAR_MULT = np.uint64(0x2545F4914F6CDD1D)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _uniform_counters(seed: int, counters: np.ndarray) -> np.ndarray:
    """xorshift64* uniforms in (0, 1] for an array of uint64 counters."""
    x = np.uint64(seed & _U64_MASK) + (counters + np.uint64(1)) * _GOLDEN
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    y = x * _STAR_MULT
    # (y >> 11) < 2**53, exactly representable; +1 keeps u strictly positive.
    return ((y >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def gaussian_noise(seed: int, n: int) -> np.ndarray:
    """n standard-normal samples from the documented counter PRNG."""
    counters = np.arange(2 * n, dtype=np.uint64)
    u = _uniform_counters(seed, counters)
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    return r * np.cos(2.0 * np.pi * u[1::2])


@dataclass(frozen=True)
class PulseTrainSpec:
    """Square wave alternating high/low compute phases at a fixed rate."""

    freq_hz: float
    duty: float
    high_w: float
    low_w: float
    duration_s: float
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise ValueError(f"freq_hz must be positive, got {self.freq_hz}")
        if not 0 < self.duty < 1:
            raise ValueError(f"duty must lie in (0, 1), got {self.duty}")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("duration_s and sample_rate_hz must be positive")
        if self.freq_hz >= self.sample_rate_hz / 2:
            raise ValueError(
                f"freq_hz {self.freq_hz} is not below Nyquist "
                f"({self.sample_rate_hz / 2})"
            )


@dataclass(frozen=True)
class SignatureSpec:
    """Baseline power plus sinusoidal tones plus seeded Gaussian noise.

    ``tones`` entries are (freq_hz, amplitude_w) or
    (freq_hz, amplitude_w, phase_rad); omitted phase is 0.
    """

    baseline_w: float = 0.0
    tones: tuple = field(default_factory=tuple)
    noise_sigma_w: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma_w < 0:
            raise ValueError(f"noise_sigma_w must be >= 0, got {self.noise_sigma_w}")
        norm = []
        for tone in self.tones:
            if len(tone) == 2:
                f, a = tone
                phase = 0.0
            elif len(tone) == 3:
                f, a, phase = tone
            else:
                raise ValueError(f"tone must be (freq, amp[, phase]), got {tone!r}")
            if f <= 0:
                raise ValueError(f"tone frequency must be positive, got {f}")
            norm.append((float(f), float(a), float(phase)))
        object.__setattr__(self, "tones", tuple(norm))
        object.__setattr__(self, "seed", int(self.seed))


def gen_pulse_train(spec: PulseTrainSpec) -> PowerTrace:
    """Instantaneous-edge square wave; sample n is high iff
    frac(n * freq / rate) < duty."""
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    if n < 1:
        raise ValueError("duration too short for one sample")
    idx = np.arange(n, dtype=np.float64)
    phase = np.mod(idx * (spec.freq_hz / spec.sample_rate_hz), 1.0)
    samples = np.where(phase < spec.duty, spec.high_w, spec.low_w)
    return PowerTrace(spec.sample_rate_hz, 0, samples)


def _render_signature(
    spec: SignatureSpec, n: int, sample_rate_hz: float
) -> np.ndarray:
    for f, _, _ in spec.tones:
        if f >= sample_rate_hz / 2:
            raise ValueError(
                f"tone at {f} Hz is not below Nyquist ({sample_rate_hz / 2})"
            )
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    out = np.full(n, float(spec.baseline_w))
    for f, a, phase in spec.tones:
        out += a * np.sin(2.0 * np.pi * f * t + phase)
    if spec.noise_sigma_w > 0:
        out += spec.noise_sigma_w * gaussian_noise(spec.seed, n)
    return out


def gen_signature(
    spec: SignatureSpec,
    duration_s: float,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    t0_ns: int = 0,
) -> PowerTrace:
    """Render a signature spec to a trace; deterministic given the seed."""
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ValueError("duration too short for one sample")
    return PowerTrace(sample_rate_hz, t0_ns, _render_signature(spec, n, sample_rate_hz))


def perturb(trace: PowerTrace, perturbation) -> PowerTrace:
    """Superimpose a perturbation onto a trace, element-wise.

    The perturbation is a SignatureSpec (rendered at the trace's own rate
    and length) or another PowerTrace (must match length and sample rate).
    """
    if isinstance(perturbation, PowerTrace):
        if perturbation.sample_rate_hz != trace.sample_rate_hz:
            raise ValueError(
                f"sample-rate mismatch: {trace.sample_rate_hz} vs "
                f"{perturbation.sample_rate_hz}"
            )
        if len(perturbation) != len(trace):
            raise ValueError(
                f"length mismatch: {len(trace)} vs {len(perturbation)}"
            )
        extra = perturbation.samples
    else:
        extra = _render_signature(perturbation, len(trace), trace.sample_rate_hz)
    return PowerTrace(trace.sample_rate_hz, trace.t0_ns, trace.samples + extra)


def quantize_12bit(trace: PowerTrace, full_scale_w: float) -> PowerTrace:
    """Snap samples to the 4096 levels of a 12-bit converter over
    [0, full_scale_w].

    Mid-tread grid: level k sits at k * full_scale_w / 4096 for
    k in 0..4095, so the top representable value is one LSB below full
    scale, as in a real converter. Out-of-range samples clamp to the
    end levels.
    """
    if full_scale_w <= 0:
        raise ValueError(f"full_scale_w must be positive, got {full_scale_w}")
    lsb = full_scale_w / 4096.0
    codes = np.clip(np.floor(trace.samples / lsb + 0.5), 0.0, 4095.0)
    return PowerTrace(trace.sample_rate_hz, trace.t0_ns, codes * lsb)
