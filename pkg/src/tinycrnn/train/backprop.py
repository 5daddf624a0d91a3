"""Reverse-mode gradients for every layer type, derived by hand.

Each ``*_backward`` takes the gradient with respect to a layer's output
plus the cache its forward pass filled, and returns parameter gradients
and the gradient with respect to the layer input.
"""

import numpy as np

from ..errors import TrainingError
from ..nn.config import Attention, Conv, DeltaFixedConv, Dense, Dropout, Gru, TimeSum
from ..nn.model import forward_batch


def activation_backward(g, activation, pre=None, out=None):
    if activation == "relu":
        return g * (pre > 0)
    if activation == "tanh":
        return g * (1.0 - out * out)
    return g


def dense_backward(g, p, cache, need_input=True):
    grads = {"W": cache["x"].T @ g, "b": g.sum(axis=0)}
    dx = (g @ p["W"].T).reshape(cache["in_shape"]) if need_input else None
    return grads, dx


def conv_backward(g, p, cache, s_t, s_f, need_input=True):
    """Gradients of a valid convolution from its cached patch matrix."""
    cols = cache["cols"]  # (B, t_out, f_out, K)
    k_t, k_f, c_in, c_out = p["kernel"].shape
    K = cols.shape[-1]
    grads = {
        "kernel": (cols.reshape(-1, K).T @ g.reshape(-1, c_out)).reshape(p["kernel"].shape),
        "bias": g.sum(axis=(0, 1, 2)),
    }
    if not need_input:
        return grads, None
    B, t_out, f_out = g.shape[:3]
    dcols = (g.reshape(-1, c_out) @ p["kernel"].reshape(K, c_out).T)
    dcols = dcols.reshape(B, t_out, f_out, k_t, k_f, c_in)
    dx = np.zeros(cache["in_shape"], dtype=g.dtype)
    for a in range(k_t):
        for b in range(k_f):
            dx[:, a:a + s_t * (t_out - 1) + 1:s_t, b:b + s_f * (f_out - 1) + 1:s_f, :] += dcols[:, :, :, a, b, :]
    return grads, dx


def batchnorm_backward(g, p, cache):
    """Train-mode batchnorm: statistics depend on the batch, so they are differentiated too."""
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    axes = tuple(range(g.ndim - 1))
    n = g.size // g.shape[-1]
    grads = {"bn_gamma": (g * xhat).sum(axis=axes), "bn_beta": g.sum(axis=axes)}
    dxhat = g * p["bn_gamma"]
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return grads, dx


def gru_backward(g, p, steps, need_input=True):
    """Backpropagation through time over the cached GRU steps.

    ``g`` is the gradient with respect to every hidden state, (B, t', d).
    """
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dh_next = np.zeros_like(g[:, 0])
    dxs = [None] * len(steps)
    for t in reversed(range(len(steps))):
        c = steps[t]
        h_prev, z, r, cand = c["h"], c["z"], c["r"], c["cand"]
        dh = g[:, t] + dh_next
        da_z = dh * (h_prev - cand) * z * (1.0 - z)
        da_h = dh * (1.0 - z) * (1.0 - cand * cand)
        d_rh = da_h @ p["U_h"]
        da_r = d_rh * h_prev * r * (1.0 - r)
        for gate, da in (("z", da_z), ("r", da_r), ("h", da_h)):
            grads[f"W_{gate}"] += da.T @ c["x"]
            grads[f"b_{gate}"] += da.sum(axis=0)
        grads["U_z"] += da_z.T @ h_prev
        grads["U_r"] += da_r.T @ h_prev
        grads["U_h"] += da_h.T @ c["rh"]
        dh_next = dh * z + d_rh * r + da_z @ p["U_z"] + da_r @ p["U_r"]
        if need_input:
            dxs[t] = da_z @ p["W_z"] + da_r @ p["W_r"] + da_h @ p["W_h"]
    dx = np.stack(dxs, axis=1) if need_input else None
    return grads, dx


def attention_backward(g, p, cache):
    L, Q, K, V, A, s = (cache[k] for k in ("L", "Q", "K", "V", "A", "scale"))
    dA = g @ V.transpose(0, 2, 1)
    dV = A.transpose(0, 2, 1) @ g
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / L.dtype.type(s)
    dQ = dS @ K
    dK = dS.transpose(0, 2, 1) @ Q
    grads = {}
    dL = np.zeros_like(L)
    for name, d in (("Q", dQ), ("K", dK), ("V", dV)):
        grads[f"W_{name}"] = np.einsum("btd,bte->de", L, d)
        grads[f"b_{name}"] = d.sum(axis=(0, 1))
        dL += d @ p[f"W_{name}"].T
    return grads, dL


def backward(cfg, weights, caches, d_logits):
    """Gradients for all trainable parameters given dLoss/dlogits of the output layer."""
    grads = {}
    g = d_logits
    last = len(cfg.layers) - 1
    for i in reversed(range(len(cfg.layers))):
        layer = cfg.layers[i]
        cache = caches[i]
        p = weights.layer(i)
        need_input = i > 0
        if isinstance(layer, Dense):
            if i != last:
                g = activation_backward(g, layer.activation, cache["z"], cache["out"])
            lg, g = dense_backward(g, p, cache, need_input)
        elif isinstance(layer, Dropout):
            if cache and "mask" in cache:
                g = g * cache["mask"]
            lg = {}
        elif isinstance(layer, TimeSum):
            t = cfg.shape_before(i)[0]
            g = np.repeat(g[:, None, :], t, axis=1)
            lg = {}
        elif isinstance(layer, Attention):
            lg, g = attention_backward(g, p, cache)
        elif isinstance(layer, Gru):
            lg, g = gru_backward(g, p, cache["steps"], need_input)
            if need_input:
                g = g.reshape((g.shape[0],) + tuple(cfg.shape_before(i)))
        elif isinstance(layer, Conv):
            pre = cache["pre_act"]
            g = activation_backward(g, layer.activation, pre, np.tanh(pre) if layer.activation == "tanh" else None)
            lg = {}
            if layer.batchnorm:
                lg, g = batchnorm_backward(g, p, cache)
            cg, g = conv_backward(g, p, cache, layer.s_t, layer.s_f, need_input)
            lg.update(cg)
        elif isinstance(layer, DeltaFixedConv):
            if need_input:
                gx = np.zeros((g.shape[0], g.shape[1] + 1) + g.shape[2:], dtype=g.dtype)
                gx[:, 1:] += g
                gx[:, :-1] -= g
                g = gx
            lg = {}
        else:
            lg = {}
        for k, v in lg.items():
            grads[f"{i}.{k}"] = v
        if not need_input:
            break
    return {k: grads[k] for k in weights.trainable()}


def cross_entropy(logits, labels):
    """Per-example cross entropy from logits (log-sum-exp form)."""
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return lse - logits[np.arange(len(labels)), labels]


def loss_and_grads(cfg, weights, batch, dropout_seed=0):
    """Mean cross entropy over ``batch = (feats, labels)`` and its gradients.

    Runs in train mode (batch statistics, dropout with a mask drawn from
    ``dropout_seed``). Returns ``(loss, grads, bn_stats)`` where
    ``bn_stats`` maps conv layer index to the batch ``(mean, var)``.
    """
    feats, labels = batch
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise TrainingError("empty batch")
    rng = np.random.default_rng(dropout_seed)
    caches, bn_stats = [], {}
    probs = forward_batch(cfg, weights, feats, train=True, rng=rng, caches=caches, bn_stats=bn_stats)
    logits = caches[-1]["z"]
    per_example = cross_entropy(logits, labels)
    bad = np.flatnonzero(~np.isfinite(per_example))
    if bad.size:
        raise TrainingError(f"non-finite loss at batch index {bad[0]}", batch_index=int(bad[0]))
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1
    d_logits = (probs - onehot) / probs.dtype.type(len(labels))
    grads = backward(cfg, weights, caches, d_logits)
    return float(per_example.mean()), grads, bn_stats
