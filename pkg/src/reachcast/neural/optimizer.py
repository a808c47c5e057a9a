"""Adam with bias correction plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Gradients

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8
CLIP_THRESHOLD = 1.0


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def global_grad_norm(arrays: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in arrays)))


def clip_gradients(grads: Gradients, threshold: float = CLIP_THRESHOLD) -> Gradients:
    """Scale all gradients in place so their global L2 norm is at most threshold."""
    norm = global_grad_norm(grads.arrays())
    if norm > threshold:
        scale = threshold / norm
        for g in grads.arrays():
            g *= scale
    return grads


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPSILON,
) -> list[np.ndarray]:
    """One Adam update, applied to the parameter arrays in place."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter, gradient and state lengths differ")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params
