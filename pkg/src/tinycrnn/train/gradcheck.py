"""Central finite-difference check of the analytic gradients."""

from dataclasses import replace

import numpy as np

from ..errors import ParameterError
from ..nn.config import Attention, Conv, DeltaFixedConv, Dense, Dropout, Gru, ModelConfig, TimeSum
from ..nn.weights import init_weights
from .backprop import cross_entropy, loss_and_grads
from ..nn.model import forward_batch


def _loss(cfg, weights, feats, labels):
    """Loss plus the sign pattern of every ReLU input (to detect kinks)."""
    caches = []
    forward_batch(cfg, weights, feats, train=True, rng=None, caches=caches)
    pattern = []
    for layer, cache in zip(cfg.layers, caches):
        if getattr(layer, "activation", None) == "relu":
            pattern.append(cache["pre_act"] > 0 if isinstance(layer, Conv) else cache["z"] > 0)
    return float(cross_entropy(caches[-1]["z"], labels).mean()), pattern


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def randomize(weights, rng, scale=0.5):
    """Perturb zero-initialised parameters and batchnorm affines away from init."""
    w = weights.copy()
    for k, v in w.items():
        name = k.split(".", 1)[1]
        if name in ("bias", "b", "bn_beta") or name.startswith("b_") or not np.any(v):
            w[k] = (scale * rng.standard_normal(v.shape)).astype(v.dtype)
        elif name == "bn_gamma":
            w[k] = (1.0 + 0.2 * rng.standard_normal(v.shape)).astype(v.dtype)
    return w


MAX_SHRINK = 4


def grad_check(cfg, seed=0, eps=1e-3, n_params=200, batch_size=4):
    """Largest relative error between analytic and central-difference gradients.

    Runs at float64 with dropout disabled and batchnorm in train mode on
    one fixed random batch. ``n_params`` parameters (all, if fewer) are
    sampled; relative error is ``|ga - gfd| / max(1e-6, |ga| + |gfd|)``.
    Where a step of ``eps`` moves some ReLU input across zero, the step is
    shrunk tenfold (up to ``MAX_SHRINK`` times) so the difference stays on
    one smooth piece. Differences at ``h`` and ``h/2`` are combined by
    Richardson extrapolation, so truncation error is fourth order in ``h``.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    cfg = replace(cfg, layers=tuple(Dropout(0.0) if isinstance(l, Dropout) else l for l in cfg.layers))
    rng = np.random.default_rng(seed)
    weights = randomize(init_weights(cfg, seed).astype(np.float64), rng)
    feats = rng.standard_normal((batch_size, cfg.frames, cfg.n_mels))
    labels = np.arange(batch_size) % 2
    _, grads, _ = loss_and_grads(cfg, weights, (feats, labels))

    candidates = [(k, j) for k in grads for j in range(grads[k].size)]
    if len(candidates) > n_params:
        pick = rng.choice(len(candidates), size=n_params, replace=False)
        candidates = [candidates[i] for i in sorted(pick)]
    worst = 0.0
    _, base = _loss(cfg, weights, feats, labels)
    for k, j in candidates:
        flat = weights[k].reshape(-1)
        h = eps
        # a ReLU switching sign inside [-h, h] invalidates the difference; shrink h
        for _ in range(MAX_SHRINK):
            d_h, smooth = _central(cfg, weights, feats, labels, flat, j, h, base)
            if smooth:
                break
            h /= 10
        d_half, _ = _central(cfg, weights, feats, labels, flat, j, h / 2, base)
        g_fd = (4 * d_half - d_h) / 3  # Richardson: cancels the h^2 term
        g_an = grads[k].reshape(-1)[j]
        rel = abs(g_an - g_fd) / max(1e-6, abs(g_an) + abs(g_fd))
        worst = max(worst, rel)
    return worst


def _central(cfg, weights, feats, labels, flat, j, h, base):
    orig = flat[j]
    flat[j] = orig + h
    up, p_up = _loss(cfg, weights, feats, labels)
    flat[j] = orig - h
    down, p_down = _loss(cfg, weights, feats, labels)
    flat[j] = orig
    return (up - down) / (2 * h), _same(p_up, base) and _same(p_down, base)


def tiny_configs():
    """Minimal models, one per layer type, small enough for exhaustive checks."""
    def cfg(name, layers, frames=12, n_mels=8, **kw):
        return ModelConfig(frames=frames, n_mels=n_mels, layers=tuple(layers), name=name, **kw)

    out = [
        cfg("dense", [Dense(6), Dense(4, "tanh"), Dense(2, "softmax")], 4, 3),
        cfg("conv", [Conv(3, 3, 2, 1, 3, batchnorm=False), Dense(2, "softmax")]),
        cfg("batchnorm", [Conv(3, 3, 2, 1, 3), Dense(2, "softmax")]),
        cfg("delta", [DeltaFixedConv(), Conv(3, 3, 2, 1, 3, batchnorm=False), Dense(2, "softmax")], 13),
        cfg("gru", [Gru(4), Dense(2, "softmax")], 6, 3),
        cfg("timesum", [Gru(3), TimeSum(), Dense(2, "softmax")], 5, 3),
        cfg("attention", [Gru(4), Attention(4), TimeSum(), Dense(2, "softmax")], 6, 3),
        cfg("attention-sqrt", [Gru(4), Attention(4), TimeSum(), Dense(2, "softmax")], 6, 3,
            divisor="sqrt-dk"),
        cfg("crnn", [Conv(3, 3, 2, 1, 3), Conv(3, 2, 1, 2, 2), Gru(4), Dropout(0.3), Attention(4),
                     TimeSum(), Dense(5), Dropout(0.3), Dense(2, "softmax")]),
    ]
    return {c.name: c for c in out}
