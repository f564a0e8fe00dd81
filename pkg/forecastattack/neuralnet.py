"""Feedforward and recurrent load forecasters in numpy with analytic gradients.

Both families map a scaled (H+1) x d window to a scaled load forecast. The
feedforward net flattens the window; the recurrent net runs a tanh cell over the
rows in time order and feeds its last state through dense layers. Training uses
the mean absolute error and plain mini-batch SGD.
"""
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .conf import app_settings
from .dataio import FeatureWindow, ScalingParams, invert_scaling
from .exceptions import BadShape, CheckpointError, Diverged, ModelError, ShapeMismatch
from .fileio import atomic_write_bytes

logger = logging.getLogger(__name__)

FAMILIES = ("feedforward", "recurrent")
ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")
OUTPUTS = ("sigmoid", "linear")
CHECKPOINT_VERSION = 1
PREDICT_CHUNK = 1024


@dataclass(frozen=True)
class ModelConfig:
    family: str
    hidden_sizes: tuple
    input_shape: tuple
    activation: str = "relu"
    output: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "input_shape", tuple(int(n) for n in self.input_shape))
        if self.family not in FAMILIES:
            raise BadShape(f"unknown model family {self.family!r}", family=self.family)
        if self.activation not in ACTIVATIONS:
            raise BadShape(f"unknown activation {self.activation!r}", activation=self.activation)
        if self.output not in OUTPUTS:
            raise BadShape(f"unknown output head {self.output!r}", output=self.output)
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise BadShape("every model needs at least one hidden layer of positive size", hidden_sizes=list(self.hidden_sizes))
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise BadShape("input shape must be (rows, columns) with positive sizes", input_shape=list(self.input_shape))

    def to_dict(self):
        return {
            "family": self.family,
            "hidden_sizes": list(self.hidden_sizes),
            "input_shape": list(self.input_shape),
            "activation": self.activation,
            "output": self.output,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ModelError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ModelError("epochs and batch size must be at least 1", epochs=self.epochs, batch_size=self.batch_size)


@dataclass(frozen=True)
class Metrics:
    mae: float
    mape: float

    def to_dict(self):
        return {"mae": self.mae, "mape": self.mape}


def default_model_config(family, input_shape, seed=0, **overrides):
    """Architecture defaults for ``family`` from the FORECASTATTACK settings."""
    defaults = app_settings()["MODELS"][family]
    values = {
        "family": family,
        "hidden_sizes": defaults["hidden_sizes"],
        "activation": defaults["activation"],
        "input_shape": input_shape,
        "seed": seed,
    }
    values.update(overrides)
    return ModelConfig(**values)


def default_train_config(family, seed=0, **overrides):
    defaults = app_settings()["MODELS"][family]
    values = {
        "learning_rate": defaults["learning_rate"],
        "epochs": defaults["epochs"],
        "batch_size": defaults["batch_size"],
        "seed": seed,
    }
    values.update(overrides)
    return TrainConfig(**values)


@dataclass(eq=False)
class ForecastModel:
    config: ModelConfig
    params: dict
    scaling: ScalingParams = None
    loss_history: list = field(default_factory=list)

    def copy(self):
        return ForecastModel(
            self.config, {name: value.copy() for name, value in self.params.items()}, self.scaling, list(self.loss_history)
        )

    @property
    def n_parameters(self):
        return sum(value.size for value in self.params.values())

    def dense_layers(self):
        """Names of (weight, bias) pairs after the recurrent cell (or all layers for feedforward)."""
        start = 0 if self.config.family == "feedforward" else 1
        count = len(self.config.hidden_sizes) + 1 - start
        return [(f"W{start + i}", f"b{start + i}") for i in range(count)]


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(cfg, scaling=None):
    rng = np.random.default_rng(cfg.seed)
    rows, cols = cfg.input_shape
    params = {}
    if cfg.family == "feedforward":
        sizes = [rows * cols, *cfg.hidden_sizes, 1]
        for i in range(len(sizes) - 1):
            params[f"W{i}"] = _glorot(rng, sizes[i], sizes[i + 1])
            params[f"b{i}"] = np.zeros(sizes[i + 1])
    else:
        state = cfg.hidden_sizes[0]
        params["Wx"] = _glorot(rng, cols, state)
        params["Wh"] = _glorot(rng, state, state)
        params["bh"] = np.zeros(state)
        sizes = [*cfg.hidden_sizes, 1]
        for i in range(1, len(sizes)):
            params[f"W{i}"] = _glorot(rng, sizes[i - 1], sizes[i])
            params[f"b{i}"] = np.zeros(sizes[i])
    return ForecastModel(cfg, params, scaling)


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_slope(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(model, inputs):
    if isinstance(inputs, FeatureWindow):
        X = inputs.values[None, :, :]
    else:
        X = np.asarray(inputs, dtype=np.float64)
        if X.ndim == 2:
            X = X[None, :, :]
    if X.ndim != 3 or X.shape[1:] != model.config.input_shape:
        raise ShapeMismatch(
            f"expected windows of shape {model.config.input_shape}, got {X.shape[1:] if X.ndim == 3 else X.shape}",
            expected=list(model.config.input_shape),
            got=list(X.shape),
        )
    return X


def _stack(windows):
    X = np.stack([w.values for w in windows])
    y = np.array([w.target for w in windows])
    return X, y


def _forward(model, X):
    cfg = model.config
    p = model.params
    cache = {"X": X}
    if cfg.family == "feedforward":
        a = X.reshape(X.shape[0], -1)
    else:
        h = np.zeros((X.shape[0], cfg.hidden_sizes[0]))
        states = [h]
        for t in range(X.shape[1]):
            h = np.tanh(X[:, t, :] @ p["Wx"] + h @ p["Wh"] + p["bh"])
            states.append(h)
        cache["states"] = states
        a = h
    layers = model.dense_layers()
    activations = [a]
    pre = []
    for i, (w, b) in enumerate(layers):
        z = a @ p[w] + p[b]
        pre.append(z)
        last = i == len(layers) - 1
        a = _activate(cfg.output if last else cfg.activation, z)
        activations.append(a)
    cache["activations"] = activations
    cache["pre"] = pre
    return a[:, 0], cache


def _backward(model, cache, dout):
    """Backpropagate d(objective)/d(output) of shape (B,) to parameters and inputs."""
    cfg = model.config
    p = model.params
    grads = {}
    layers = model.dense_layers()
    activations = cache["activations"]
    pre = cache["pre"]
    da = dout[:, None]
    for i in reversed(range(len(layers))):
        w, b = layers[i]
        last = i == len(layers) - 1
        name = cfg.output if last else cfg.activation
        dz = da * _activation_slope(name, pre[i], activations[i + 1])
        grads[w] = activations[i].T @ dz
        grads[b] = dz.sum(axis=0)
        da = dz @ p[w].T
    X = cache["X"]
    if cfg.family == "feedforward":
        return grads, da.reshape(X.shape)
    states = cache["states"]
    dX = np.zeros_like(X)
    grads["Wx"] = np.zeros_like(p["Wx"])
    grads["Wh"] = np.zeros_like(p["Wh"])
    grads["bh"] = np.zeros_like(p["bh"])
    dh = da
    for t in reversed(range(X.shape[1])):
        h = states[t + 1]
        dz = dh * (1.0 - h * h)
        grads["Wx"] += X[:, t, :].T @ dz
        grads["Wh"] += states[t].T @ dz
        grads["bh"] += dz.sum(axis=0)
        dX[:, t, :] = dz @ p["Wx"].T
        dh = dz @ p["Wh"].T
    return grads, dX


def forward(model, window):
    """Scaled forecast for one window (a FeatureWindow or an (H+1) x d array)."""
    out, _ = _forward(model, _as_batch(model, window))
    return float(out[0])


def predict(model, windows):
    """Batched forecasts for a list of windows or an (N, H+1, d) array."""
    X = _as_batch(model, np.stack([w.values for w in windows]) if isinstance(windows, list) else windows)
    chunks = [_forward(model, X[i:i + PREDICT_CHUNK])[0] for i in range(0, X.shape[0], PREDICT_CHUNK)]
    return np.concatenate(chunks) if chunks else np.zeros(0)


def grad_input(model, window):
    X = _as_batch(model, window)
    out, cache = _forward(model, X)
    _, dX = _backward(model, cache, np.ones_like(out))
    return dX[0]


def _batch_arrays(model, batch):
    if isinstance(batch, tuple):
        X, y = batch
        return _as_batch(model, X), np.asarray(y, dtype=np.float64).reshape(-1)
    X, y = _stack(batch)
    return _as_batch(model, X), y


def loss(model, batch):
    X, y = _batch_arrays(model, batch)
    out, _ = _forward(model, X)
    return float(np.mean(np.abs(out - y)))


def grad_params(model, batch):
    """Gradient of the mean L1 loss over ``batch`` with respect to every parameter array.

    ``batch`` is a list of windows or an ``(X, y)`` pair. The subgradient of
    ``|r|`` at ``r = 0`` is taken as 0.
    """
    X, y = _batch_arrays(model, batch)
    if X.shape[0] != y.shape[0]:
        raise ShapeMismatch("inputs and targets disagree on batch size", inputs=X.shape[0], targets=y.shape[0])
    out, cache = _forward(model, X)
    grads, _ = _backward(model, cache, np.sign(out - y) / X.shape[0])
    return grads


def train(model, windows, cfg):
    """Return a trained copy of ``model``; the input model is left untouched."""
    if not windows:
        raise ModelError("training needs at least one window")
    X, y = _stack(windows) if isinstance(windows, list) else windows
    X = _as_batch(model, X)
    trained = model.copy()
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    history = [_epoch_loss(trained, X, y)]
    logger.info(
        "Training %s model (%d parameters) on %d windows for %d epochs",
        trained.config.family,
        trained.n_parameters,
        n,
        cfg.epochs,
    )
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            grads = grad_params(trained, (X[rows], y[rows]))
            for name, grad in grads.items():
                trained.params[name] -= cfg.learning_rate * grad
        epoch_loss = _epoch_loss(trained, X, y)
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(v)) for v in trained.params.values()):
            raise Diverged(f"training diverged in epoch {epoch + 1}", epoch=epoch + 1, loss=str(epoch_loss))
        history.append(epoch_loss)
        logger.debug("epoch %d/%d: mean absolute error %.5f", epoch + 1, cfg.epochs, epoch_loss)
    trained.loss_history = trained.loss_history + history
    logger.info("Training finished: loss %.5f -> %.5f", history[0], history[-1])
    return trained


def _epoch_loss(model, X, y):
    with np.errstate(all="ignore"):
        out = np.concatenate([_forward(model, X[i:i + PREDICT_CHUNK])[0] for i in range(0, X.shape[0], PREDICT_CHUNK)])
        return float(np.mean(np.abs(out - y)))


def evaluate_forecasts(predictions, windows, scaling):
    """MAE in scaled units and MAPE (percent) on MW for arbitrary forecasts of ``windows``."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.shape != (len(windows),) or not len(windows):
        raise ShapeMismatch("need one forecast per window", forecasts=list(predictions.shape), windows=len(windows))
    if scaling is None:
        raise ModelError("MAPE needs the load scaling parameters")
    truth = np.array([w.target for w in windows])
    forecast_mw = invert_scaling(scaling, predictions, "load")
    truth_mw = invert_scaling(scaling, truth, "load")
    mae = float(np.mean(np.abs(predictions - truth)))
    mape = float(np.mean(np.abs(forecast_mw - truth_mw) / truth_mw) * 100.0)
    return Metrics(mae, mape)


def evaluate(model, windows):
    return evaluate_forecasts(predict(model, windows), windows, model.scaling)


def save_model(model, path):
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "scaling": model.scaling.to_dict() if model.scaling else None,
        "loss_history": [float(v) for v in model.loss_history],
        "parameters": list(model.params),
    }
    buffer = io.BytesIO()
    np.savez(buffer, __meta__=np.array(json.dumps(meta)), **model.params)
    return atomic_write_bytes(path, buffer.getvalue())


def load_model(path):
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["__meta__"]))
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"unsupported checkpoint version {meta.get('format_version')!r}", path=str(path)
                )
            params = {name: archive[name].astype(np.float64) for name in meta["parameters"]}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}", path=str(path)) from exc
    config = ModelConfig.from_dict(meta["config"])
    scaling = ScalingParams.from_dict(meta["scaling"]) if meta["scaling"] else None
    model = ForecastModel(config, params, scaling, meta["loss_history"])
    reference = init_model(config)
    for name, value in reference.params.items():
        if name not in params or params[name].shape != value.shape:
            raise CheckpointError(f"parameter {name} is missing or has the wrong shape", path=str(path))
    return model
