"""Shared fixtures and independent reference implementations (oracles).

The oracles here deliberately avoid the package's own code paths:
the DFT oracle is the O(N^2) definition evaluated as a matrix product,
the noise oracle is a scalar pure-Python transcription of the
documented PRNG, and gradients are checked by finite differences in
the module tests.
"""

import math

import numpy as np
import pytest

import paella


def dft_oracle(x: np.ndarray) -> np.ndarray:
    """Direct O(N^2) DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N)."""
    n = len(x)
    k = np.arange(n)
    m = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return m @ np.asarray(x, dtype=np.complex128)


_MASK = 0xFFFFFFFFFFFFFFFF


def uniform_oracle(seed: int, counter: int) -> float:
    """Scalar transcription of the documented xorshift64* counter PRNG."""
    x = (seed + (counter + 1) * 0x9E3779B97F4A7C15) & _MASK
    x ^= x >> 12
    x = (x ^ (x << 25)) & _MASK
    x ^= x >> 27
    y = (x * 0x2545F4914F6CDD1D) & _MASK
    return ((y >> 11) + 1) * 2.0**-53


def gaussian_oracle(seed: int, i: int) -> float:
    u1 = uniform_oracle(seed, 2 * i)
    u2 = uniform_oracle(seed, 2 * i + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@pytest.fixture(scope="session")
def welch_defaults() -> paella.WelchConfig:
    return paella.WelchConfig()


@pytest.fixture()
def toy_model() -> paella.AeModel:
    """Hand-set 2-2-1-1-2 network for forward/loss arithmetic."""
    weights = [
        np.array([[0.5, -0.25], [0.1, 0.2]]),
        np.array([[0.3, -0.4]]),
        np.array([[2.0]]),
        np.array([[1.5], [-0.5]]),
    ]
    biases = [
        np.array([0.1, -0.1]),
        np.array([0.05]),
        np.array([0.0]),
        np.array([0.2, 0.1]),
    ]
    state = paella.StandardizerState(np.zeros(2), np.ones(2))
    return paella.AeModel((2, 2, 1, 1, 2), weights, biases,
                          ("tanh", "relu", "relu", "tanh"), state, 0.0)


def healthy_spec(seed: int) -> paella.SignatureSpec:
    """Synthetic healthy workload signature used across tests."""
    return paella.SignatureSpec(
        baseline_w=100.0,
        tones=((1220.703125, 1.0), (5200.0, 0.6), (250.0, 0.4)),
        noise_sigma_w=0.05,
        seed=seed,
    )


def perturbed_spec(seed: int) -> paella.SignatureSpec:
    """Extra injected tone on top of a healthy signature."""
    return paella.SignatureSpec(
        baseline_w=0.0,
        tones=((3300.0, 2.0),),
        noise_sigma_w=0.0,
        seed=seed,
    )
