"""Forward kernels for each layer type.

All functions take a leading batch axis. When a ``cache`` dict is passed
they record what the hand-written backward passes in
:mod:`tinycrnn.train.backprop` need.
"""

import numpy as np

from ..errors import DimensionError
from ..tensors import conv_output_extent, conv_time_step, relu, sigmoid, softmax_lastdim

DELTA_KERNEL = np.array([-1.0, 1.0], dtype=np.float32).reshape(2, 1, 1, 1)


def activate(x, activation):
    if activation == "relu":
        return relu(x)
    if activation == "tanh":
        return np.tanh(x)
    if activation == "softmax":
        return softmax_lastdim(x)
    return x


def conv_forward(x, kernel, bias, s_t, s_f, cache=None):
    """Valid convolution of ``(B, t, f, c_in)``, one output time step at a time."""
    k_t = kernel.shape[0]
    t_out = conv_output_extent(x.shape[1], k_t, s_t)
    outs, cols = [], []
    for i in range(t_out):
        o, c = conv_time_step(x[:, i * s_t:i * s_t + k_t], kernel, s_f, bias, return_columns=True)
        outs.append(o)
        cols.append(c)
    if cache is not None:
        cache["cols"] = np.stack(cols, axis=1)  # (B, t_out, f_out, K)
        cache["in_shape"] = x.shape
    return np.stack(outs, axis=1)


def delta_forward(x):
    return conv_forward(x, DELTA_KERNEL.astype(x.dtype), None, 1, 1)


def batchnorm_forward(x, p, train, eps, cache=None):
    """Per-channel batchnorm over every axis but the last.

    In train mode the batch statistics are used (and returned); otherwise
    the running statistics.
    """
    if train:
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    else:
        mean, var = p["bn_mean"], p["bn_var"]
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    if cache is not None:
        cache["xhat"] = xhat
        cache["inv_std"] = inv_std
    return p["bn_gamma"] * xhat + p["bn_beta"], (mean, var)


def gru_step(x, h, p, cache=None):
    """Advance GRU states ``h`` (rows, d) on inputs ``x`` (rows, n_in).

    z = sigmoid(W_z x + U_z h + b_z), r likewise, candidate
    tanh(W_h x + U_h (r * h) + b_h), then h <- z * h + (1 - z) * candidate.
    """
    z = sigmoid(x @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
    r = sigmoid(x @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
    rh = r * h
    cand = np.tanh(x @ p["W_h"].T + rh @ p["U_h"].T + p["b_h"])
    h_new = z * h + (1.0 - z) * cand
    if cache is not None:
        cache.append({"x": x, "h": h, "z": z, "r": r, "rh": rh, "cand": cand})
    return h_new


def forward_gru(seq, p, h0=None, cache=None):
    """Run a GRU over ``seq`` of shape (t', n_in) or (B, t', n_in).

    Returns every hidden state, shape ([B,] t', d).
    """
    squeeze = seq.ndim == 2
    if squeeze:
        seq = seq[None]
    d, n_in = p["W_z"].shape
    if seq.shape[-1] != n_in:
        raise DimensionError(f"GRU expects {n_in} input features, got {seq.shape[-1]}")
    B, T = seq.shape[:2]
    if h0 is None:
        h = np.zeros((B, d), dtype=seq.dtype)
    else:
        h = np.broadcast_to(np.asarray(h0, dtype=seq.dtype), (B, d))
    steps = []
    for t in range(T):
        h = gru_step(seq[:, t], h, p, cache)
        steps.append(h)
    out = np.stack(steps, axis=1)
    return out[0] if squeeze else out


def attention_divisor(d, mode):
    return float(d) if mode == "dk" else float(np.sqrt(d))


def attention_forward(L, p, divisor="dk", cache=None):
    """Scaled dot-product self-attention over ``L`` (B, t', d).

    U = softmax(Q K^T / s) V with Q = L W_Q + b_Q (same for K, V), where
    the scale s is d itself (``"dk"``) or its square root (``"sqrt-dk"``).
    """
    squeeze = L.ndim == 2
    if squeeze:
        L = L[None]
    d = p["W_Q"].shape[0]
    s = attention_divisor(d, divisor)
    Q = L @ p["W_Q"] + p["b_Q"]
    K = L @ p["W_K"] + p["b_K"]
    V = L @ p["W_V"] + p["b_V"]
    A = softmax_lastdim(Q @ K.transpose(0, 2, 1) / L.dtype.type(s))
    U = A @ V
    if cache is not None:
        cache.update(L=L, Q=Q, K=K, V=V, A=A, scale=s)
    return U[0] if squeeze else U


def dense_forward(x, p, activation, cache=None):
    flat = x.reshape(x.shape[0], -1)
    z = flat @ p["W"] + p["b"]
    out = activate(z, activation)
    if cache is not None:
        cache.update(x=flat, in_shape=x.shape, z=z, out=out)
    return out


def dropout_forward(x, rate, rng, cache=None):
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    if cache is not None:
        cache["mask"] = mask
    return x * mask
