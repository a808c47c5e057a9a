"""Training loops: the base recipe and small-sample transfer adaptation."""

from __future__ import annotations

import numpy as np

from .network import Model, clone_model, loss_and_grads, param_arrays
from .optimizer import CLIP_THRESHOLD, AdamState, adam_step, clip_gradients

DEFAULT_EPOCHS = 60
TRANSFER_EPOCHS = 50
DEFAULT_LR = 1e-3
DEFAULT_BATCH = 32


def train(
    model: Model,
    x: np.ndarray,
    targets: np.ndarray,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    batch_size: int = DEFAULT_BATCH,
    seed: int = 0,
    clip: float = CLIP_THRESHOLD,
) -> Model:
    """Fit the model in place on standardized windows and targets.

    The dataset is shuffled once before the first epoch; every epoch then
    sweeps the same fixed order in minibatches of batch_size, keeping the
    final partial batch. Per-epoch mean task loss lands in
    model.meta["loss_history"]. Deterministic given (model, data, seed).
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if targets.shape[0] != n:
        raise ValueError("targets length does not match windows")

    order = np.random.default_rng(seed).permutation(n)
    dropout_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    x = x[order]
    targets = targets[order]

    state = AdamState.for_params(param_arrays(model))
    starts = range(0, n, batch_size)
    history = []
    for _ in range(epochs):
        epoch_loss = 0.0
        for s in starts:
            xb = x[s : s + batch_size]
            yb = targets[s : s + batch_size]
            loss, grads = loss_and_grads(model, xb, yb, train=True, rng=dropout_rng)
            clip_gradients(grads, clip)
            adam_step(param_arrays(model), grads.arrays(), state, lr)
            epoch_loss += loss
        history.append(epoch_loss / len(starts))

    model.meta.update(
        {"epochs": epochs, "lr": lr, "batch_size": batch_size,
         "train_seed": seed, "loss_history": history}
    )
    return model


def transfer_train(
    model: Model,
    x: np.ndarray,
    targets: np.ndarray,
    epochs: int = TRANSFER_EPOCHS,
    lr: float = DEFAULT_LR,
    batch_size: int = DEFAULT_BATCH,
    seed: int = 0,
) -> Model:
    """Adapt a trained model to a new user on a small standardized set.

    Returns a new model; the input model is untouched. Optimizer state starts
    fresh, and the adaptation windows must already be standardized with the
    base model's stored statistics.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty adaptation set")
    adapted = clone_model(model)
    adapted.meta["adapted_from"] = model.meta.get("train_seed")
    train(adapted, x, targets, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)
    return adapted
