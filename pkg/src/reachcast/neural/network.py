"""Self-contained LSTM sequence model with exact backpropagation through time.

One LSTM layer (sigmoid gates, tanh candidate and cell output) feeds a ReLU
fully connected layer and a linear or softmax head. Gate parameters are packed
row-wise in i, f, g, o order so each timestep costs two matrix products.
All math runs in 64-bit floats; serialization narrows to 32-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import NormStats
from ..features import FeatureSet
from ..tasks import Task

DEFAULT_FC = 16
DEFAULT_DROPOUT = 0.2
L2_ALPHA = 1e-4


@dataclass
class ModelConfig:
    task: Task
    feature_set: FeatureSet
    input_dim: int
    hidden: int
    window_len: int
    fc: int = DEFAULT_FC
    dropout: float = DEFAULT_DROPOUT
    l2_alpha: float = L2_ALPHA

    def __post_init__(self):
        if min(self.input_dim, self.hidden, self.fc, self.window_len) < 1:
            raise ValueError("all model dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")

    @property
    def output_dim(self) -> int:
        return self.task.output_dim


@dataclass
class LstmParams:
    """Packed gate parameters; rows 0:H input gate, H:2H forget, 2H:3H
    candidate, 3H:4H output gate."""

    wx: np.ndarray        # (4H, D)
    wh: np.ndarray        # (4H, H)
    b: np.ndarray         # (4H,)


@dataclass
class HeadParams:
    fc_w: np.ndarray      # (F, H)
    fc_b: np.ndarray      # (F,)
    out_w: np.ndarray     # (O, F)
    out_b: np.ndarray     # (O,)


@dataclass
class Gradients:
    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.wx, self.wh, self.b, self.fc_w, self.fc_b, self.out_w, self.out_b]


@dataclass
class Model:
    config: ModelConfig
    lstm: LstmParams
    head: HeadParams
    norm: NormStats | None = None
    meta: dict = field(default_factory=dict)


def param_arrays(model: Model) -> list[np.ndarray]:
    """Canonical parameter order shared by the optimizer and gradients."""
    return [
        model.lstm.wx,
        model.lstm.wh,
        model.lstm.b,
        model.head.fc_w,
        model.head.fc_b,
        model.head.out_w,
        model.head.out_b,
    ]


def count_params(config: ModelConfig) -> int:
    d, h, f, o = config.input_dim, config.hidden, config.fc, config.output_dim
    return 4 * (h * d + h * h + h) + (f * h + f) + (o * f + o)


def init_model(config: ModelConfig, seed) -> Model:
    """Uniform +-sqrt(1/fan_in) weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    d, h, f, o = config.input_dim, config.hidden, config.fc, config.output_dim
    wx = rng.uniform(-1.0, 1.0, (4 * h, d)) / np.sqrt(d)
    wh = rng.uniform(-1.0, 1.0, (4 * h, h)) / np.sqrt(h)
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0
    fc_w = rng.uniform(-1.0, 1.0, (f, h)) / np.sqrt(h)
    fc_b = np.zeros(f)
    out_w = rng.uniform(-1.0, 1.0, (o, f)) / np.sqrt(f)
    out_b = np.zeros(o)
    return Model(
        config=config,
        lstm=LstmParams(wx=wx, wh=wh, b=b),
        head=HeadParams(fc_w=fc_w, fc_b=fc_b, out_w=out_w, out_b=out_b),
        meta={"seed": seed},
    )


def clone_model(model: Model) -> Model:
    return Model(
        config=model.config,
        lstm=LstmParams(model.lstm.wx.copy(), model.lstm.wh.copy(), model.lstm.b.copy()),
        head=HeadParams(
            model.head.fc_w.copy(), model.head.fc_b.copy(),
            model.head.out_w.copy(), model.head.out_b.copy(),
        ),
        norm=model.norm,
        meta=dict(model.meta),
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):            # large negatives saturate to 0
        return 1.0 / (1.0 + np.exp(-x))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lstm_forward(params: LstmParams, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run the recurrence over x, shape (B, L, D) or (L, D); h_0 = c_0 = 0.

    Returns the final hidden state and a cache of per-step activations for
    backward.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    bsz, length, _ = x.shape
    hdim = params.wh.shape[1]
    if params.wx.shape[1] != x.shape[2]:
        raise ValueError(
            f"input dim {x.shape[2]} does not match weights ({params.wx.shape[1]})"
        )

    # input projections for every step in one product
    zx = x.reshape(bsz * length, -1) @ params.wx.T
    zx = zx.reshape(bsz, length, 4 * hdim)

    gates = np.empty((length, bsz, 4 * hdim))
    cells = np.empty((length, bsz, hdim))
    tanh_c = np.empty((length, bsz, hdim))
    h_prev = np.empty((length, bsz, hdim))
    h_t = np.zeros((bsz, hdim))
    c_t = np.zeros((bsz, hdim))
    wh_t = params.wh.T
    for t in range(length):
        h_prev[t] = h_t
        z = zx[:, t] + h_t @ wh_t + params.b
        z[:, : 2 * hdim] = sigmoid(z[:, : 2 * hdim])          # input, forget
        z[:, 3 * hdim :] = sigmoid(z[:, 3 * hdim :])          # output
        z[:, 2 * hdim : 3 * hdim] = np.tanh(z[:, 2 * hdim : 3 * hdim])
        i = z[:, :hdim]
        f = z[:, hdim : 2 * hdim]
        g = z[:, 2 * hdim : 3 * hdim]
        o = z[:, 3 * hdim :]
        c_t = f * c_t + i * g
        tc = np.tanh(c_t)
        h_t = o * tc
        gates[t] = z
        cells[t] = c_t
        tanh_c[t] = tc

    cache = {
        "x": x,
        "gates": gates,
        "cells": cells,
        "tanh_c": tanh_c,
        "h_prev": h_prev,
        "h_last": h_t,
    }
    return (h_t[0] if single else h_t), cache


def lstm_backward(
    params: LstmParams, cache: dict, d_h_last: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact BPTT given the gradient at the final hidden state."""
    x = cache["x"]
    gates = cache["gates"]
    cells = cache["cells"]
    tanh_c = cache["tanh_c"]
    h_prev = cache["h_prev"]
    bsz, length, _ = x.shape
    hdim = params.wh.shape[1]

    dz_all = np.empty_like(gates)
    dh = d_h_last
    dc = np.zeros_like(d_h_last)
    for t in range(length - 1, -1, -1):
        z = gates[t]
        i = z[:, :hdim]
        f = z[:, hdim : 2 * hdim]
        g = z[:, 2 * hdim : 3 * hdim]
        o = z[:, 3 * hdim :]
        tc = tanh_c[t]
        c_prev = cells[t - 1] if t > 0 else np.zeros_like(tc)

        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :hdim] = dc * g * i * (1.0 - i)
        dz[:, hdim : 2 * hdim] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hdim : 3 * hdim] = dc * i * (1.0 - g * g)
        dz[:, 3 * hdim :] = do * o * (1.0 - o)
        dh = dz @ params.wh
        dc = dc * f

    dz_flat = dz_all.reshape(length * bsz, 4 * hdim)
    x_flat = x.transpose(1, 0, 2).reshape(length * bsz, -1)
    hp_flat = h_prev.reshape(length * bsz, hdim)
    d_wx = dz_flat.T @ x_flat
    d_wh = dz_flat.T @ hp_flat
    d_b = dz_flat.sum(axis=0)
    return d_wx, d_wh, d_b


def forward(
    model: Model,
    x: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Full forward pass; returns (output, cache).

    Output is (B, O): standardized predictions for regression, class
    probabilities for classification. Dropout applies only in train mode,
    with inverted scaling so inference needs no correction.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    cfg = model.config
    if x.shape[1] != cfg.window_len or x.shape[2] != cfg.input_dim:
        raise ValueError(
            f"window shape {x.shape[1:]} does not match config "
            f"({cfg.window_len}, {cfg.input_dim})"
        )
    h_last, lstm_cache = lstm_forward(model.lstm, x)

    if train and cfg.dropout > 0.0:
        if dropout_mask is None:
            if rng is None:
                raise ValueError("train-mode forward needs an rng or explicit mask")
            keep = rng.random(h_last.shape) >= cfg.dropout
            dropout_mask = keep / (1.0 - cfg.dropout)
        h_dropped = h_last * dropout_mask
    else:
        dropout_mask = None
        h_dropped = h_last

    fc_pre = h_dropped @ model.head.fc_w.T + model.head.fc_b
    fc_act = np.maximum(fc_pre, 0.0)
    logits = fc_act @ model.head.out_w.T + model.head.out_b
    output = softmax(logits) if cfg.task.is_classification else logits

    cache = {
        "lstm": lstm_cache,
        "h_last": h_last,
        "dropout_mask": dropout_mask,
        "h_dropped": h_dropped,
        "fc_pre": fc_pre,
        "fc_act": fc_act,
        "output": output,
    }
    return output, cache


def loss_rmse(pred: np.ndarray, target: np.ndarray) -> float:
    """Root mean square error over every output of the minibatch."""
    pred = np.atleast_2d(pred)
    target = np.atleast_2d(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def loss_xent(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(probs < 0):
        raise ValueError("probabilities are not normalized")
    picked = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def task_loss(task: Task, output: np.ndarray, targets: np.ndarray) -> float:
    if task.is_classification:
        return loss_xent(output, targets)
    return loss_rmse(output, targets)


def l2_penalty(model: Model) -> float:
    alpha = model.config.l2_alpha
    if alpha == 0.0:
        return 0.0
    return alpha * sum(float(np.sum(p * p)) for p in param_arrays(model))


def backward(model: Model, cache: dict, targets: np.ndarray) -> Gradients:
    """Gradients of task loss + l2_alpha * sum of squared parameters."""
    cfg = model.config
    output = cache["output"]
    bsz = output.shape[0]

    if cfg.task.is_classification:
        labels = np.asarray(targets, dtype=np.int64).reshape(-1)
        d_logits = output.copy()
        d_logits[np.arange(bsz), labels] -= 1.0
        d_logits /= bsz
    else:
        targets = np.asarray(targets, dtype=np.float64).reshape(output.shape)
        resid = output - targets
        rmse = np.sqrt(np.mean(resid**2))
        d_logits = np.zeros_like(resid) if rmse == 0.0 else resid / (resid.size * rmse)

    fc_act = cache["fc_act"]
    d_out_w = d_logits.T @ fc_act
    d_out_b = d_logits.sum(axis=0)
    d_fc_act = d_logits @ model.head.out_w
    d_fc_pre = d_fc_act * (cache["fc_pre"] > 0.0)
    d_fc_w = d_fc_pre.T @ cache["h_dropped"]
    d_fc_b = d_fc_pre.sum(axis=0)
    d_h = d_fc_pre @ model.head.fc_w
    if cache["dropout_mask"] is not None:
        d_h = d_h * cache["dropout_mask"]

    d_wx, d_wh, d_b = lstm_backward(model.lstm, cache["lstm"], d_h)

    grads = Gradients(d_wx, d_wh, d_b, d_fc_w, d_fc_b, d_out_w, d_out_b)
    if cfg.l2_alpha > 0.0:
        for g, p in zip(grads.arrays(), param_arrays(model)):
            g += 2.0 * cfg.l2_alpha * p
    return grads


def loss_and_grads(
    model: Model,
    x: np.ndarray,
    targets: np.ndarray,
    train: bool = True,
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, Gradients]:
    output, cache = forward(model, x, train=train, rng=rng, dropout_mask=dropout_mask)
    loss = task_loss(model.config.task, output, targets) + l2_penalty(model)
    return loss, backward(model, cache, targets)


def predict(model: Model, windows: np.ndarray) -> np.ndarray:
    """Inference on raw-unit windows: standardize, run, de-standardize.

    Returns (B, O) predictions in mm/ms for regression or (B, C) class
    probabilities for classification; a single (L, D) window gives 1 row.
    """
    if model.norm is None:
        raise ValueError("model carries no normalization statistics")
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    output, _ = forward(model, model.norm.apply_features(x), train=False)
    if model.config.task.is_classification:
        return output
    return model.norm.invert_targets(output)
