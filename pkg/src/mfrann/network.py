"""Emulator-embedded random-feature networks.

A network has one or more hidden layers with frozen random weights.  The
standardized output of every emulator is appended to the output of every
hidden layer, so emulator values reach the next layer through random weights
and reach the output layer directly.  Only the output layer is fitted, by a
truncated-SVD least-squares solve on the last hidden layer's features plus a
constant bias column.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .errors import NonFiniteError, UntrainedModelError
from .numerics import DEFAULT_RCOND, nrmse, pinv_solve

LARGE_HIDDEN_SIZES = (200, 5000)
PREDICT_CHUNK = 512

SWISH = "swish"
FOURIER = "fourier"
SMALL = "small"
LARGE = "large"
CUSTOM = "custom"


@dataclass(frozen=True)
class ActivationKind:
    """Hidden neuron nonlinearity.

    ``swish`` is ``v * sigmoid(v)``; ``fourier`` is ``sin(scale * v)`` where
    ``v`` is the neuron's affine input (weights times inputs plus bias).
    """

    name: str
    scale: float | None = None

    def __post_init__(self):
        if self.name == FOURIER:
            if self.scale is None or not self.scale > 0:
                raise ValueError(f"Fourier activation needs a positive scale, got {self.scale}")
        elif self.name == SWISH:
            if self.scale is not None:
                raise ValueError("swish activation takes no scale")
        else:
            raise ValueError(f"unknown activation {self.name!r}")

    @classmethod
    def swish(cls) -> "ActivationKind":
        return cls(SWISH)

    @classmethod
    def fourier(cls, scale: float) -> "ActivationKind":
        return cls(FOURIER, float(scale))

    @property
    def is_fourier(self) -> bool:
        return self.name == FOURIER

    def apply_(self, pre: np.ndarray) -> np.ndarray:
        """Activate ``pre`` in place and return it."""
        if self.name == FOURIER:
            pre *= self.scale
            np.sin(pre, out=pre)
        else:
            # sigmoid(v) = (1 + tanh(v / 2)) / 2; tanh is much cheaper than exp-based forms
            gate = np.tanh(0.5 * pre)
            gate += 1.0
            gate *= 0.5
            pre *= gate
        return pre

    def to_dict(self) -> dict:
        return {"name": self.name, "scale": self.scale}

    @classmethod
    def from_dict(cls, doc: dict) -> "ActivationKind":
        return cls(doc["name"], doc.get("scale"))


@dataclass(frozen=True)
class Architecture:
    """Hidden layer widths, not counting emulator neurons.

    ``small`` has a single layer of ``2 * n_train`` neurons, ``large`` has two
    layers (200 and 5000 neurons by default).  ``custom`` accepts any widths.
    """

    kind: str
    hidden_layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.hidden_layer_sizes)
        object.__setattr__(self, "hidden_layer_sizes", sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"hidden layer sizes must be positive, got {sizes}")
        if self.kind == SMALL and len(sizes) != 1:
            raise ValueError("small architecture has exactly one hidden layer")
        if self.kind == LARGE and len(sizes) != 2:
            raise ValueError("large architecture has exactly two hidden layers")
        if self.kind not in (SMALL, LARGE, CUSTOM):
            raise ValueError(f"unknown architecture kind {self.kind!r}")

    @classmethod
    def small(cls, n_train: int) -> "Architecture":
        return cls(SMALL, (2 * int(n_train),))

    @classmethod
    def large(cls, sizes: Sequence[int] = LARGE_HIDDEN_SIZES) -> "Architecture":
        return cls(LARGE, tuple(sizes))

    @classmethod
    def custom(cls, sizes: Sequence[int]) -> "Architecture":
        return cls(CUSTOM, tuple(sizes))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden_layer_sizes": list(self.hidden_layer_sizes)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Architecture":
        return cls(doc["kind"], tuple(doc["hidden_layer_sizes"]))


@dataclass(frozen=True)
class Emulator:
    """A cheap information source evaluated on the scaled input domain.

    ``fn`` maps an ``(m, d)`` array of scaled points to ``m`` values.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.asarray(self.fn(z), dtype=float).reshape(z.shape[0])


@dataclass(frozen=True)
class ModelConfig:
    architecture: Architecture
    activation: ActivationKind
    input_dim: int
    emulators: tuple[Emulator, ...] = ()
    standardize_emulators: bool = True
    rcond: float = DEFAULT_RCOND

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        object.__setattr__(self, "emulators", tuple(self.emulators))


@dataclass(frozen=True)
class E2nnModel:
    """One emulator-embedded network.

    Hidden weights are frozen at construction.  ``output_weights`` is ``None``
    until :func:`train_last_layer` returns a trained copy; its last entry is
    the output bias.
    """

    config: ModelConfig
    seed: int
    hidden_weights: tuple[np.ndarray, ...]
    hidden_biases: tuple[np.ndarray, ...]
    output_weights: np.ndarray | None = None
    target_scaler: tuple[float, float] = (0.0, 1.0)
    emulator_scalers: tuple[tuple[float, float], ...] = ()
    max_abs_weight: float | None = None
    train_nrmse: float | None = None

    @property
    def architecture(self) -> Architecture:
        return self.config.architecture

    @property
    def activation(self) -> ActivationKind:
        return self.config.activation

    @property
    def emulators(self) -> tuple[Emulator, ...]:
        return self.config.emulators

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def n_features(self) -> int:
        return self.config.architecture.hidden_layer_sizes[-1] + len(self.config.emulators) + 1

    @property
    def is_trained(self) -> bool:
        return self.output_weights is not None

    @cached_property
    def _single_precision(self) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
        return (
            tuple(w.astype(np.float32) for w in self.hidden_weights),
            tuple(b.astype(np.float32) for b in self.hidden_biases),
        )

    def hidden_params(self, dtype=np.float64):
        """Hidden weights and biases cast to ``dtype`` (float32 copies are cached)."""
        if np.dtype(dtype) == np.float32:
            return self._single_precision
        return self.hidden_weights, self.hidden_biases

    @property
    def output_bias(self) -> float:
        if self.output_weights is None:
            raise UntrainedModelError("model has not been trained")
        return float(self.output_weights[-1])


def glorot_normal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


def init_model(config: ModelConfig, seed: int) -> E2nnModel:
    """Draw frozen hidden weights and biases from ``seed``.

    Layer ``i`` sees the previous layer's neurons plus one neuron per emulator
    (the raw inputs for the first layer).  Fourier biases are uniform on
    ``[0, 2*pi]``, swish biases uniform on ``[-4, 4]``.
    """
    rng = np.random.default_rng(seed)
    n_emu = len(config.emulators)
    fan_in = config.input_dim
    weights, biases = [], []
    for width in config.architecture.hidden_layer_sizes:
        weights.append(glorot_normal(rng, fan_in, width))
        if config.activation.is_fourier:
            biases.append(rng.uniform(0.0, 2.0 * np.pi, size=width))
        else:
            biases.append(rng.uniform(-4.0, 4.0, size=width))
        fan_in = width + n_emu
    for w in weights:
        w.setflags(write=False)
    for b in biases:
        b.setflags(write=False)
    return E2nnModel(
        config=config,
        seed=int(seed),
        hidden_weights=tuple(weights),
        hidden_biases=tuple(biases),
        emulator_scalers=tuple((0.0, 1.0) for _ in config.emulators),
    )


def emulator_values(model: E2nnModel, z: np.ndarray) -> np.ndarray:
    """Raw emulator outputs at ``z`` as an ``(m, n_emulators)`` array."""
    if not model.emulators:
        return np.empty((z.shape[0], 0))
    return np.column_stack([emu.evaluate(z) for emu in model.emulators])


def _standardized_emulators(model: E2nnModel, raw: np.ndarray) -> np.ndarray:
    if raw.shape[1] == 0 or not model.config.standardize_emulators:
        return raw
    shift = np.array([m for m, _ in model.emulator_scalers])
    scale = np.array([s for _, s in model.emulator_scalers])
    return (raw - shift) / scale


def _last_hidden(model: E2nnModel, z: np.ndarray, emu: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Activated output of the last hidden layer, without emulator neurons.

    Each layer after the first takes ``[previous activations, emulators]``.
    """
    h = z.astype(dtype, copy=False)
    emu = emu.astype(dtype, copy=False)
    for layer, (w, b) in enumerate(zip(*model.hidden_params(dtype))):
        if layer > 0 and emu.shape[1]:
            # one matmul on the concatenated input beats a separate rank-k update
            h = np.concatenate([h, emu], axis=1)
        pre = h @ w
        pre += b
        h = model.activation.apply_(pre)
    return h


def _features(model: E2nnModel, z: np.ndarray, emu: np.ndarray) -> np.ndarray:
    h = _last_hidden(model, z, emu)
    width = h.shape[1]
    out = np.empty((h.shape[0], width + emu.shape[1] + 1))
    out[:, :width] = h
    out[:, width:-1] = emu
    out[:, -1] = 1.0
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("hidden features contain non-finite values")
    return out


def hidden_features(model: E2nnModel, z) -> np.ndarray:
    """Last-hidden-layer output, emulator neurons, and a constant 1.

    Accepts one point of shape ``(d,)`` or a batch ``(m, d)`` in the scaled
    domain; returns ``(n_features,)`` or ``(m, n_features)`` accordingly.
    """
    z_arr = np.asarray(z, dtype=float)
    single = z_arr.ndim == 1
    z2 = np.atleast_2d(z_arr)
    if z2.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input columns, got {z2.shape[1]}")
    emu = _standardized_emulators(model, emulator_values(model, z2))
    if not np.all(np.isfinite(emu)):
        raise NonFiniteError("emulator output is non-finite")
    feats = _features(model, z2, emu)
    return feats[0] if single else feats


def _scaler(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    std = float(np.std(values))
    # a constant column cannot be standardized; centre it and leave the scale
    if not std > 0:
        std = 1.0
    return mean, std


def train_last_layer(model: E2nnModel, data: Dataset) -> E2nnModel:
    """Fit the output layer by truncated-SVD least squares on ``data.X_scaled``.

    Targets and emulator outputs are standardized with statistics of the
    training set.  Returns a trained copy; ``model`` is left untouched.
    """
    z_train = data.X_scaled
    y_train = data.y
    if y_train.size == 0:
        raise ValueError("cannot train on an empty dataset")
    raw = emulator_values(model, z_train)
    emu_scalers = tuple(_scaler(raw[:, j]) for j in range(raw.shape[1]))
    staged = dataclasses.replace(model, emulator_scalers=emu_scalers)
    design = hidden_features(staged, z_train)
    y_mean, y_std = _scaler(y_train)
    solution = pinv_solve(design, (y_train - y_mean) / y_std, model.config.rcond)
    weights = solution.weights
    weights.setflags(write=False)
    trained = dataclasses.replace(
        staged,
        output_weights=weights,
        target_scaler=(y_mean, y_std),
        max_abs_weight=solution.max_abs_weight,
    )
    fitted = predict(trained, z_train)
    try:
        fit_error = nrmse(fitted, y_train)
    except ValueError:
        fit_error = float(np.sqrt(np.mean((fitted - y_train) ** 2)) / y_std)
    return dataclasses.replace(trained, train_nrmse=fit_error)


def predict(model: E2nnModel, z, dtype=np.float64) -> np.ndarray | float:
    """Network output in the original target units.

    ``dtype=np.float32`` runs the hidden layers in single precision, several
    times faster for large batches; use it only where ~1e-5 relative error is
    acceptable, e.g. screening acquisition candidates.
    """
    if model.output_weights is None:
        raise UntrainedModelError("model has not been trained")
    z_arr = np.asarray(z, dtype=float)
    single = z_arr.ndim == 1
    z2 = np.atleast_2d(z_arr)
    if z2.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input columns, got {z2.shape[1]}")
    emu = _standardized_emulators(model, emulator_values(model, z2))
    if not np.all(np.isfinite(emu)):
        raise NonFiniteError("emulator output is non-finite")
    w = model.output_weights
    width = model.architecture.hidden_layer_sizes[-1]
    w_hidden = w[:width].astype(dtype, copy=False)
    out = emu @ w[width:-1] + w[-1]
    for start in range(0, z2.shape[0], PREDICT_CHUNK):
        stop = start + PREDICT_CHUNK
        h = _last_hidden(model, z2[start:stop], emu[start:stop], dtype)
        out[start:stop] += h @ w_hidden
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("network output is non-finite")
    mean, std = model.target_scaler
    out = out * std + mean
    return float(out[0]) if single else out


def model_to_dict(model: E2nnModel) -> dict:
    """JSON-ready document; hidden weights are regenerated from the seed on load."""
    cfg = model.config
    return {
        "architecture": cfg.architecture.to_dict(),
        "activation": cfg.activation.to_dict(),
        "input_dim": cfg.input_dim,
        "emulators": [emu.name for emu in cfg.emulators],
        "standardize_emulators": cfg.standardize_emulators,
        "rcond": cfg.rcond,
        "seed": model.seed,
        "target_scaler": list(model.target_scaler),
        "emulator_scalers": [list(s) for s in model.emulator_scalers],
        "output_weights": None if model.output_weights is None else model.output_weights.tolist(),
        "max_abs_weight": model.max_abs_weight,
        "train_nrmse": model.train_nrmse,
    }


def model_from_dict(doc: dict, emulators: Sequence[Emulator] = ()) -> E2nnModel:
    """Rebuild a model; ``emulators`` are matched to the stored names in order."""
    names = list(doc["emulators"])
    if [emu.name for emu in emulators] != names:
        raise ValueError(f"model expects emulators {names}, got {[e.name for e in emulators]}")
    config = ModelConfig(
        architecture=Architecture.from_dict(doc["architecture"]),
        activation=ActivationKind.from_dict(doc["activation"]),
        input_dim=int(doc["input_dim"]),
        emulators=tuple(emulators),
        standardize_emulators=bool(doc["standardize_emulators"]),
        rcond=float(doc["rcond"]),
    )
    model = init_model(config, int(doc["seed"]))
    weights = doc["output_weights"]
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        weights.setflags(write=False)
    return dataclasses.replace(
        model,
        output_weights=weights,
        target_scaler=tuple(doc["target_scaler"]),
        emulator_scalers=tuple(tuple(s) for s in doc["emulator_scalers"]),
        max_abs_weight=doc["max_abs_weight"],
        train_nrmse=doc["train_nrmse"],
    )
