"""LSTM sequence models: architecture, training, optimization, serialization."""

from .io import ModelFormatError, load_model, load_model_file, save_model, save_model_file
from .network import (
    Gradients,
    HeadParams,
    LstmParams,
    Model,
    ModelConfig,
    backward,
    clone_model,
    count_params,
    forward,
    init_model,
    loss_and_grads,
    loss_rmse,
    loss_xent,
    lstm_forward,
    param_arrays,
    predict,
    sigmoid,
    softmax,
    task_loss,
)
from .optimizer import (
    AdamState,
    adam_step,
    clip_gradients,
    global_grad_norm,
)
from .training import train, transfer_train

__all__ = [
    "AdamState",
    "Gradients",
    "HeadParams",
    "LstmParams",
    "Model",
    "ModelConfig",
    "ModelFormatError",
    "adam_step",
    "backward",
    "clip_gradients",
    "clone_model",
    "count_params",
    "forward",
    "global_grad_norm",
    "init_model",
    "load_model",
    "load_model_file",
    "loss_and_grads",
    "loss_rmse",
    "loss_xent",
    "lstm_forward",
    "param_arrays",
    "predict",
    "save_model",
    "save_model_file",
    "sigmoid",
    "softmax",
    "task_loss",
    "train",
    "transfer_train",
]
