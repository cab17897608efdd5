"""Dense feed-forward regressor with hand-written backprop, MAE loss and Adam.

Everything runs in float64. Layers are stored as ``(weights, bias)`` with
``weights`` shaped ``(out, in)``; a batch ``X`` of shape ``(n, in)`` maps to
``X @ W.T + b``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_ingest import EncodingSchema, NumericTable, Scaler
from .errors import FormatError, NumericError, ShapeError
from .io_utils import atomic_write_text

DEFAULT_WIDTHS = (32, 16, 8, 4, 2, 1)
MODEL_FORMAT = "clustertransfer-mlp"
MODEL_VERSION = 1

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Mlp:
    layers: tuple[Layer, ...]
    freeze_mask: tuple[bool, ...]
    input_dim: int

    def __post_init__(self):
        if len(self.freeze_mask) != len(self.layers):
            raise ShapeError("freeze_mask length must equal the number of layers")
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.weights.shape != (layer.n_out, width) or layer.bias.shape != (layer.n_out,):
                raise ShapeError(f"layer {i} shapes {layer.weights.shape}/{layer.bias.shape} "
                                 f"do not chain from width {width}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            width = layer.n_out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(layer.n_out for layer in self.layers)

    def n_params(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def params(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        layers = tuple(
            Layer(params[2 * i], params[2 * i + 1], layer.activation)
            for i, layer in enumerate(self.layers)
        )
        return replace(self, layers=layers)

    def copy(self) -> "Mlp":
        return self.with_params([p.copy() for p in self.params()])


@dataclass(frozen=True)
class Gradients:
    """Per-layer ``(dW, db)`` pairs, aligned with ``Mlp.layers``."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> list[np.ndarray]:
        out = []
        for dw, db in zip(self.weights, self.biases):
            out += [dw, db]
        return out


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, mlp: Mlp, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        zeros = tuple(np.zeros_like(p) for p in mlp.params())
        return cls(zeros, tuple(z.copy() for z in zeros), 0, lr, beta1, beta2, eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle_each_epoch: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class LossHistory:
    losses: tuple[float, ...]
    best_epoch: int
    steps: int = 0

    @property
    def best_loss(self) -> float:
        return self.losses[self.best_epoch]


def init_mlp(input_dim: int, widths: Sequence[int] = DEFAULT_WIDTHS, seed: int = 0) -> Mlp:
    """He-uniform weights in ``±sqrt(6 / fan_in)``, zero biases, nothing frozen."""
    widths = tuple(int(w) for w in widths)
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    if not widths or any(w < 1 for w in widths) or widths[-1] != 1:
        raise ValueError(f"widths must be positive and end in 1, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for i, width in enumerate(widths):
        limit = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(width, fan_in))
        act = "linear" if i == len(widths) - 1 else "relu"
        layers.append(Layer(W, np.zeros(width), act))
        fan_in = width
    return Mlp(tuple(layers), (False,) * len(widths), input_dim)


def _check_input(mlp: Mlp, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ShapeError(f"network expects width {mlp.input_dim}, got shape {X.shape}")
    return X


def _forward_cache(mlp: Mlp, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    inputs, pre = [], []
    a = X
    for layer in mlp.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    inputs.append(a)
    return inputs, pre


def forward(mlp: Mlp, x) -> np.ndarray:
    """Network output: ``(out,)`` for a single vector, ``(n, out)`` for a batch."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    X = _check_input(mlp, arr[None, :] if single else arr)
    out = _forward_cache(mlp, X)[0][-1]
    return out[0] if single else out


def predict(mlp: Mlp, X) -> np.ndarray:
    """1-D predictions for a single-output network."""
    return forward(mlp, np.asarray(X, dtype=np.float64).reshape(-1, mlp.input_dim))[:, 0]


def mae_loss(preds, targets) -> float:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"{p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ValueError("mae_loss of an empty batch")
    return float(np.mean(np.abs(p - t)))


def backward(mlp: Mlp, batch_x, batch_y) -> Gradients:
    """Gradient of the batch MAE with respect to every weight and bias.

    Subgradients are taken as 0 where the residual is exactly 0 and where a
    relu pre-activation is exactly 0.
    """
    X = _check_input(mlp, batch_x)
    y = np.asarray(batch_y, dtype=np.float64)
    out_width = mlp.layers[-1].n_out
    y = y.reshape(X.shape[0], out_width) if y.size == X.shape[0] * out_width else y
    inputs, pre = _forward_cache(mlp, X)
    if y.shape != inputs[-1].shape:
        raise ShapeError(f"targets shape {np.shape(batch_y)} vs outputs {inputs[-1].shape}")

    delta = np.sign(inputs[-1] - y) / y.size
    dWs: list[np.ndarray] = [None] * mlp.depth
    dbs: list[np.ndarray] = [None] * mlp.depth
    for i in range(mlp.depth - 1, -1, -1):
        layer = mlp.layers[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0.0)
        dWs[i] = delta.T @ inputs[i]
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layer.weights
    return Gradients(tuple(dWs), tuple(dbs))


def adam_step(mlp: Mlp, grads: Gradients, state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update.

    Frozen layers keep their parameters and their moment buffers untouched.
    """
    params = mlp.params()
    g = grads.flat()
    if len(g) != len(params) or any(a.shape != b.shape for a, b in zip(g, params)):
        raise ShapeError("gradient shapes do not match the network")
    if len(state.m) != len(params) or any(a.shape != b.shape for a, b in zip(state.m, params)):
        raise ShapeError("Adam state shapes do not match the network")

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for j, (p, gj, m, v) in enumerate(zip(params, g, state.m, state.v)):
        if mlp.freeze_mask[j // 2]:
            new_p.append(p)
            new_m.append(m)
            new_v.append(v)
            continue
        m = b1 * m + (1.0 - b1) * gj
        v = b2 * v + (1.0 - b2) * gj * gj
        m_hat = m / corr1
        v_hat = v / corr2
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return mlp.with_params(new_p), replace(state, m=tuple(new_m), v=tuple(new_v), t=t)


def _table_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, NumericTable):
        return data.features, data.target
    X, y = data
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64).reshape(-1)


def train(mlp: Mlp, data, config: TrainConfig) -> tuple[Mlp, LossHistory]:
    """Minibatch Adam on MAE; returns the best-epoch parameters.

    ``data`` is a :class:`NumericTable` or an ``(X, y)`` pair. The loss logged
    for an epoch is the MAE over all training rows with the parameters at the
    end of that epoch, so the returned network reproduces ``best_loss``
    exactly. Optimizer state always starts fresh.
    """
    X, y = _table_arrays(data)
    X = _check_input(mlp, X)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty table")
    if y.shape != (n,):
        raise ShapeError(f"{n} rows but {y.shape} targets")

    rng = np.random.default_rng(config.seed)
    state = AdamState.fresh(mlp, config.learning_rate, config.beta1, config.beta2, config.eps)
    losses: list[float] = []
    best_epoch, best_loss, best_mlp = -1, np.inf, mlp
    order = np.arange(n)
    for epoch in range(config.epochs):
        if config.shuffle_each_epoch:
            order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = backward(mlp, X[idx], y[idx])
            mlp, state = adam_step(mlp, grads, state)
        loss = mae_loss(predict(mlp, X), y)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        losses.append(loss)
        if loss < best_loss:
            best_epoch, best_loss, best_mlp = epoch, loss, mlp
    return best_mlp, LossHistory(tuple(losses), best_epoch, state.t)


def freeze_layers(mlp: Mlp, n_frozen: int) -> Mlp:
    if not 0 <= n_frozen < mlp.depth:
        raise ValueError(
            f"n_frozen must be in [0, {mlp.depth - 1}] so the output layer stays trainable, "
            f"got {n_frozen}"
        )
    return replace(mlp, freeze_mask=tuple(i < n_frozen for i in range(mlp.depth)))


def model_to_dict(mlp: Mlp, schema: EncodingSchema | None = None, scaler: Scaler | None = None,
                  seed: int | None = None, config: TrainConfig | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_dim": mlp.input_dim,
        "widths": list(mlp.widths),
        "activations": [layer.activation for layer in mlp.layers],
        "layers": [
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
            for layer in mlp.layers
        ],
        "freeze_mask": list(mlp.freeze_mask),
        "schema": schema.to_dict() if schema is not None else None,
        "scaler": scaler.to_dict() if scaler is not None else None,
        "seed": seed,
        "config_fingerprint": config.fingerprint() if config is not None else None,
    }


def model_from_dict(doc: dict) -> tuple[Mlp, EncodingSchema | None, Scaler | None]:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a clustertransfer model file")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}, "
                          f"expected {MODEL_VERSION}")
    try:
        layers = tuple(
            Layer(np.array(entry["weights"], dtype=np.float64).reshape(w, -1),
                  np.array(entry["bias"], dtype=np.float64), act)
            for entry, w, act in zip(doc["layers"], doc["widths"], doc["activations"])
        )
        if not (len(layers) == len(doc["widths"]) == len(doc["activations"])):
            raise FormatError("layer count disagrees with widths/activations")
        mlp = Mlp(layers, tuple(bool(b) for b in doc["freeze_mask"]), int(doc["input_dim"]))
        schema = EncodingSchema.from_dict(doc["schema"]) if doc.get("schema") else None
        scaler = Scaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt model file: {exc}") from exc
    return mlp, schema, scaler


def save_model(mlp: Mlp, schema: EncodingSchema | None, scaler: Scaler | None, path,
               seed: int | None = None, config: TrainConfig | None = None) -> Path:
    doc = model_to_dict(mlp, schema, scaler, seed, config)
    # json writes floats with repr(), which round-trips float64 exactly.
    return atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_model(path) -> tuple[Mlp, EncodingSchema | None, Scaler | None]:
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt model file {path}: {exc}") from exc
    return model_from_dict(doc)
