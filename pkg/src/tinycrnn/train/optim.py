"""Adam with bias correction."""

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    steps: int = 2000
    dropout: float = 0.3
    seed: int = 0
    eval_every: int = 100
    bn_momentum: float = 0.9

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")
        if self.steps < 0 or self.eval_every < 1:
            raise ParameterError("steps must be >= 0 and eval_every >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict


def adam_init(weights):
    keys = weights.trainable()
    return AdamState(m={k: np.zeros_like(weights[k]) for k in keys},
                     v={k: np.zeros_like(weights[k]) for k in keys})


def adam_step(weights, grads, state, tcfg, step_index):
    """One bias-corrected Adam update; ``step_index`` counts updates from 1.

    Returns new ``(weights, state)``; the inputs are left untouched.
    """
    if step_index < 1:
        raise ParameterError("step_index counts from 1")
    if set(grads) != set(state.m):
        raise ParameterError("gradient keys do not match optimizer state")
    new_w = weights.copy()
    m, v = {}, {}
    c1 = 1.0 - tcfg.beta1 ** step_index
    c2 = 1.0 - tcfg.beta2 ** step_index
    for k, g in grads.items():
        m[k] = tcfg.beta1 * state.m[k] + (1.0 - tcfg.beta1) * g
        v[k] = tcfg.beta2 * state.v[k] + (1.0 - tcfg.beta2) * g * g
        update = tcfg.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + tcfg.eps)
        new_w[k] = (weights[k] - update).astype(weights[k].dtype)
    return new_w, AdamState(m, v)
