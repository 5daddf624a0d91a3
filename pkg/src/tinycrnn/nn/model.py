"""Model assembly: run a :class:`ModelConfig` layer stack."""

from dataclasses import dataclass

import numpy as np

from ..errors import BuildError, DimensionError
from ..tensors import as_tensor, check_finite
from .config import Attention, Conv, DeltaFixedConv, Dense, Dropout, Gru, TimeSum
from .layers import (attention_forward, batchnorm_forward, conv_forward, delta_forward,
                     dense_forward, dropout_forward, forward_gru, activate)
from .weights import BN_EPS


@dataclass
class Posterior:
    """Two-class output ``probs = [p_negative, p_wakeword]``."""

    probs: np.ndarray

    @property
    def p_wakeword(self):
        return float(self.probs[1])


def run_layers(cfg, weights, x, start=0, stop=None, train=False, rng=None, caches=None,
               bn_stats=None):
    """Apply ``cfg.layers[start:stop]`` to a batch ``x``.

    ``x`` carries a leading batch axis and has the shape the first applied
    layer expects. ``caches`` (a list) receives one dict per layer;
    ``bn_stats`` (a dict) receives train-mode batch statistics keyed by
    layer index.
    """
    stop = len(cfg.layers) if stop is None else stop
    for i in range(start, stop):
        layer = cfg.layers[i]
        p = weights.layer(i)
        cache = {} if caches is not None else None
        if isinstance(layer, DeltaFixedConv):
            x = delta_forward(x)
        elif isinstance(layer, Conv):
            x = conv_forward(x, p["kernel"], p["bias"], layer.s_t, layer.s_f, cache)
            if layer.batchnorm:
                x, stats = batchnorm_forward(x, p, train, BN_EPS, cache)
                if train and bn_stats is not None:
                    bn_stats[i] = stats
            if cache is not None:
                cache["pre_act"] = x
            x = activate(x, layer.activation)
        elif isinstance(layer, Gru):
            if x.ndim == 4:
                x = x.reshape(x.shape[0], x.shape[1], -1)
            steps = [] if cache is not None else None
            x = forward_gru(x, p, cache=steps)
            if cache is not None:
                cache["steps"] = steps
        elif isinstance(layer, Attention):
            x = attention_forward(x, p, cfg.divisor, cache)
        elif isinstance(layer, TimeSum):
            x = x.sum(axis=1)
        elif isinstance(layer, Dense):
            x = dense_forward(x, p, layer.activation, cache)
        elif isinstance(layer, Dropout):
            if train and layer.rate > 0:
                if rng is None:
                    raise BuildError("train-mode dropout needs an rng")
                x = dropout_forward(x, layer.rate, rng, cache)
        if caches is not None:
            caches.append(cache)
    return x


def prepare_input(cfg, feats):
    """Validate and lift ``(B?, frames, n_mels)`` features to ``(B, t, f, 1)``."""
    x = as_tensor(feats)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (cfg.frames, cfg.n_mels):
        raise DimensionError(f"features {x.shape[1:]} do not match model input "
                             f"{(cfg.frames, cfg.n_mels)}")
    return x[..., None]


def forward_batch(cfg, weights, feats, train=False, rng=None, caches=None, bn_stats=None):
    """Class probabilities for a batch of feature windows, shape (B, 2)."""
    x = prepare_input(cfg, feats)
    return run_layers(cfg, weights, x, train=train, rng=rng, caches=caches, bn_stats=bn_stats)


def forward_model(feat, cfg, weights, train_mode=False, seed=None):
    """Posterior for a single ``(frames, n_mels)`` feature window.

    Inference mode uses batchnorm running statistics and no dropout; train
    mode uses the window's own batch statistics and dropout seeded by
    ``seed``.
    """
    rng = np.random.default_rng(seed) if train_mode else None
    probs = forward_batch(cfg, weights, feat, train=train_mode, rng=rng)[0]
    return Posterior(check_finite(probs, "forward_model"))
