"""Fully-connected autoencoder for PSD reconstruction.

Architecture is a fixed 4-layer chain (3 hidden layers plus the output
layer) with dims [1025, 8, 4, 4, 1025] and activations
tanh-relu-relu-tanh. Inputs are standardized per column (remove mean,
scale to unit variance) before entering the network; reconstruction
error is measured in the standardized space.

Training is plain analytic backprop with Adagrad updates and an L1
penalty on the weights (not the biases). Everything is deterministic
given the config seed: Glorot-uniform init and the per-epoch shuffle
both draw from one seeded generator.

Model files: magic ``PAEM``, format version, layer dims, then weights,
biases, standardizer, and the L1 coefficient as little-endian float64,
so a save/load round-trip reproduces forward outputs bit-exactly.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError

log = logging.getLogger(__name__)

LAYER_DIMS = (1025, 8, 4, 4, 1025)
ACTIVATIONS = ("tanh", "relu", "relu", "tanh")

MODEL_MAGIC = b"PAEM"
MODEL_VERSION = 1
_ACT_CODES = {"tanh": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class StandardizerState:
    """Per-column mean/std; zero-variance columns carry std 1."""

    mean: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)
    fitted: bool = True

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64, order="C")
        std = np.array(self.std, dtype=np.float64, order="C")
        if mean.ndim != 1 or std.shape != mean.shape:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if self.fitted and not np.all(std > 0):
            raise ValueError("std must be strictly positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 5
    learning_rate: float = 0.01
    adagrad_eps: float = 1e-8
    l1_lambda: float = 1e-5
    seed: int = 0
    init: str = "glorot_uniform"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive integers")
        if self.learning_rate <= 0 or self.adagrad_eps <= 0:
            raise ValueError("learning_rate and adagrad_eps must be positive")
        if self.l1_lambda < 0:
            raise ValueError(f"l1_lambda must be >= 0, got {self.l1_lambda}")
        if self.init != "glorot_uniform":
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class AeModel:
    """Immutable trained (or freshly initialized) autoencoder.

    Construction copies the parameter arrays, so a model never aliases
    caller-owned storage.
    """

    layer_dims: tuple
    weights: tuple = field(repr=False)
    biases: tuple = field(repr=False)
    activations: tuple = ACTIVATIONS
    standardizer: StandardizerState = None
    l1_lambda: float = 0.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) != 5 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must be 5 positive sizes, got {dims}")
        if dims[0] != dims[-1]:
            raise ValueError(
                f"input dim {dims[0]} must equal output dim {dims[-1]}"
            )
        acts = tuple(self.activations)
        if len(acts) != 4 or any(a not in _ACT_CODES for a in acts):
            raise ValueError(f"activations must be 4 of tanh/relu, got {acts}")
        if len(self.weights) != 4 or len(self.biases) != 4:
            raise ValueError("expected 4 weight matrices and 4 bias vectors")
        weights = []
        biases = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64, order="C")
            b = np.array(b, dtype=np.float64, order="C")
            if w.shape != (dims[i + 1], dims[i]):
                raise ValueError(
                    f"weight {i} has shape {w.shape}, "
                    f"expected {(dims[i + 1], dims[i])}"
                )
            if b.shape != (dims[i + 1],):
                raise ValueError(
                    f"bias {i} has shape {b.shape}, expected {(dims[i + 1],)}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} parameters contain non-finite values")
            w.setflags(write=False)
            b.setflags(write=False)
            weights.append(w)
            biases.append(b)
        if self.l1_lambda < 0:
            raise ValueError(f"l1_lambda must be >= 0, got {self.l1_lambda}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "l1_lambda", float(self.l1_lambda))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def fit_standardizer(features) -> StandardizerState:
    """Population mean/std per column; zero-variance columns get std 1."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population (ddof=0)
    std = np.where(std == 0.0, 1.0, std)
    return StandardizerState(mean, std, fitted=True)


def standardize(state: StandardizerState, x) -> np.ndarray:
    """(x - mean) / std per column; accepts one row or a matrix of rows."""
    if not state.fitted:
        raise ValueError("standardizer is not fitted")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != state.mean.size:
        raise ValueError(
            f"expected {state.mean.size} columns, got {x.shape[-1]}"
        )
    return (x - state.mean) / state.std


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else np.maximum(z, 0.0)


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(np.float64)  # relu'(0) = 0


def _forward_chain(activations, weights, biases, x):
    a = x
    cache = []
    for name, w, b in zip(activations, weights, biases):
        z = a @ w.T + b
        a = _activate(name, z)
        cache.append((z, a))
    return a, cache


def forward(model: AeModel, x):
    """Run the network; returns (output, cache of per-layer (pre, post)).

    ``x`` is one standardized row (1-D) or a matrix of rows (2-D); the
    output matches its leading shape.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1] != model.layer_dims[0]:
        raise ValueError(
            f"expected input dim {model.layer_dims[0]}, got {a.shape[-1]}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("input contains non-finite values")
    return _forward_chain(model.activations, model.weights, model.biases, a)


def _l1_sum(weights) -> float:
    return float(sum(np.abs(w).sum() for w in weights))


def loss(model: AeModel, x) -> float:
    """Reconstruction MSE of one standardized row plus the L1 weight penalty."""
    x = np.asarray(x, dtype=np.float64)
    y, _ = forward(model, x)
    mse = float(np.mean((x - y) ** 2))
    return mse + model.l1_lambda * _l1_sum(model.weights)


def batch_loss(model: AeModel, rows) -> float:
    """Mean per-row reconstruction MSE plus the L1 weight penalty."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    y, _ = forward(model, rows)
    mse = float(np.mean(np.mean((rows - y) ** 2, axis=1)))
    return mse + model.l1_lambda * _l1_sum(model.weights)


def _backprop(activations, weights, l1_lambda, x, y, cache):
    n_rows, dim = x.shape
    delta = (2.0 / (n_rows * dim)) * (y - x)
    grad_w = [None] * 4
    grad_b = [None] * 4
    for i in range(3, -1, -1):
        z, a = cache[i]
        delta = delta * _activate_grad(activations[i], z, a)
        prev = x if i == 0 else cache[i - 1][1]
        grad_w[i] = delta.T @ prev + l1_lambda * np.sign(weights[i])
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i]
    return grad_w, grad_b


def gradients(model: AeModel, batch):
    """Analytic gradient of the mean batch loss for every weight and bias.

    Returns (weight_grads, bias_grads) shaped like the model parameters.
    relu and the L1 penalty use subgradient 0 at 0.
    """
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    y, cache = forward(model, x)
    return _backprop(
        model.activations, model.weights, model.l1_lambda, x, y, cache
    )


def adagrad_step(params, grads, accumulators, cfg: TrainConfig):
    """acc += g*g; p -= lr * g / (sqrt(acc) + eps), element-wise in place."""
    for p, g, acc in zip(params, grads, accumulators):
        acc += g * g
        p -= cfg.learning_rate * g / (np.sqrt(acc) + cfg.adagrad_eps)
    return params, accumulators


def _glorot_init(dims, rng: np.random.Generator):
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train(
    features,
    cfg: TrainConfig = None,
    layer_dims: tuple = LAYER_DIMS,
    loss_history: list = None,
) -> AeModel:
    """Fit the standardizer and train the autoencoder on raw PSD rows.

    Deterministic given cfg.seed. The final partial batch of each epoch
    is used. If ``loss_history`` is a list, the mean training loss of
    each epoch is appended to it. The final epoch's mean loss is logged.
    """
    cfg = cfg or TrainConfig()
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix of PSD rows")
    n_rows = x.shape[0]
    if n_rows < cfg.batch_size:
        raise ValueError(
            f"{n_rows} rows is fewer than batch_size {cfg.batch_size}"
        )
    if x.shape[1] != layer_dims[0]:
        raise ValueError(
            f"features have {x.shape[1]} columns, expected {layer_dims[0]}"
        )
    state = fit_standardizer(x)
    xs = standardize(state, x)

    rng = np.random.default_rng(cfg.seed)
    weights, biases = _glorot_init(layer_dims, rng)
    acc_w = [np.zeros_like(w) for w in weights]
    acc_b = [np.zeros_like(b) for b in biases]

    final_loss = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_rows)
        epoch_losses = []
        for start in range(0, n_rows, cfg.batch_size):
            rows = xs[order[start : start + cfg.batch_size]]
            y, cache = _forward_chain(ACTIVATIONS, weights, biases, rows)
            mse = float(np.mean(np.mean((rows - y) ** 2, axis=1)))
            epoch_losses.append(mse + cfg.l1_lambda * _l1_sum(weights))
            gw, gb = _backprop(ACTIVATIONS, weights, cfg.l1_lambda, rows, y, cache)
            adagrad_step(weights, gw, acc_w, cfg)
            adagrad_step(biases, gb, acc_b, cfg)
        final_loss = float(np.mean(epoch_losses))
        if loss_history is not None:
            loss_history.append(final_loss)
        log.info(
            "epoch %d/%d mean training loss %.6g", epoch + 1, cfg.epochs, final_loss
        )
    log.info("final training loss %.6g", final_loss)
    return AeModel(layer_dims, weights, biases, ACTIVATIONS, state, cfg.l1_lambda)


def save_model(model: AeModel, path) -> None:
    if model.standardizer is None or not model.standardizer.fitted:
        raise ValueError("refusing to save a model without a fitted standardizer")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        fh.write(bytes(_ACT_CODES[a] for a in model.activations))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.standardizer.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.standardizer.std, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", model.l1_lambda))


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ModelFormatError(f"{path}: truncated file while reading {what}")
    return data


def load_model(path) -> AeModel:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path, "magic")
        if magic != MODEL_MAGIC:
            raise ModelFormatError(
                f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}"
            )
        version, n_dims = struct.unpack("<II", _read_exact(fh, 8, path, "version"))
        if version != MODEL_VERSION:
            raise ModelFormatError(
                f"{path}: format version {version}, expected {MODEL_VERSION}"
            )
        if n_dims != 5:
            raise ModelFormatError(f"{path}: expected 5 layer dims, got {n_dims}")
        dims = struct.unpack("<5I", _read_exact(fh, 20, path, "dims"))
        act_codes = _read_exact(fh, 4, path, "activations")
        if any(c not in _ACT_NAMES for c in act_codes):
            raise ModelFormatError(f"{path}: unknown activation code")
        acts = tuple(_ACT_NAMES[c] for c in act_codes)
        weights = []
        biases = []
        for i in range(4):
            wn = dims[i + 1] * dims[i]
            w = np.frombuffer(
                _read_exact(fh, 8 * wn, path, f"weight {i}"), dtype="<f8"
            ).reshape(dims[i + 1], dims[i])
            b = np.frombuffer(
                _read_exact(fh, 8 * dims[i + 1], path, f"bias {i}"), dtype="<f8"
            )
            weights.append(w)
            biases.append(b)
        mean = np.frombuffer(
            _read_exact(fh, 8 * dims[0], path, "standardizer mean"), dtype="<f8"
        )
        std = np.frombuffer(
            _read_exact(fh, 8 * dims[0], path, "standardizer std"), dtype="<f8"
        )
        (l1_lambda,) = struct.unpack("<d", _read_exact(fh, 8, path, "l1_lambda"))
        if fh.read(1):
            raise ModelFormatError(f"{path}: trailing bytes after model data")
    try:
        state = StandardizerState(mean, std, fitted=True)
        return AeModel(dims, weights, biases, acts, state, l1_lambda)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
