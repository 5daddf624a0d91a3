"""Dense numeric kernels.

Tensors are plain ``numpy.ndarray`` objects. Everything defaults to
float32; float64 inputs are passed through untouched so that gradient
checks can run at double precision on the same code path.

Convolution is computed one output time step at a time through
:func:`conv_time_step`. The streaming ring buffers call the same function
on the same window shape, which is what makes ring and batch convolution
agree bit for bit.
"""

import numpy as np

from .errors import DimensionError, NonFiniteError

DTYPE = np.float32


def as_tensor(x, dtype=None):
    """Return ``x`` as a float array (float32 unless float64 already)."""
    arr = np.asarray(x)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(DTYPE, copy=False)


def check_finite(x, where="tensor"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values produced by {where}")
    return x


def matmul(a, b):
    """Matrix product of ``(..., m, k)`` and ``(k, n)`` (or ``(..., k, n)``)."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    with np.errstate(invalid="ignore", over="ignore"):  # reported by check_finite instead
        out = np.matmul(a, b)
    return check_finite(out, "matmul")


def conv_output_extent(n, k, s):
    return (n - k) // s + 1


def freq_columns(window, k_f, s_f):
    """Unfold a ``(..., k_t, f, c)`` window into ``(..., f_out, k_t*k_f*c)``.

    The flattened patch is ordered (time offset, freq offset, channel),
    matching a kernel of shape ``(k_t, k_f, c_in, c_out)`` reshaped to
    ``(k_t*k_f*c_in, c_out)``.
    """
    k_t, f, c = window.shape[-3:]
    f_out = conv_output_extent(f, k_f, s_f)
    # (..., k_t, f-k_f+1, c, k_f) -> keep strided freq starts
    view = np.lib.stride_tricks.sliding_window_view(window, k_f, axis=-2)
    view = view[..., ::s_f, :, :][..., :f_out, :, :]
    # -> (..., f_out, k_t, k_f, c)
    nd = view.ndim
    lead = list(range(nd - 4))
    view = view.transpose(lead + [nd - 3, nd - 4, nd - 1, nd - 2])
    return np.ascontiguousarray(view).reshape(window.shape[:-3] + (f_out, k_t * k_f * c))


def conv_time_step(window, kernel, s_f, bias=None, return_columns=False):
    """One output time step of a valid convolution.

    ``window`` is ``(..., k_t, f, c_in)`` holding exactly the ``k_t`` input
    columns under the kernel; returns ``(..., f_out, c_out)`` (and the
    unfolded patches when ``return_columns`` is set).
    """
    k_t, k_f, c_in, c_out = kernel.shape
    cols = freq_columns(window, k_f, s_f)
    lead = cols.shape[:-1]
    out = np.matmul(cols.reshape(-1, cols.shape[-1]), kernel.reshape(-1, c_out))
    if bias is not None:
        out = out + bias
    out = out.reshape(lead + (c_out,))
    if return_columns:
        return out, cols
    return out


def conv2d_valid(x, kernel, stride=(1, 1), bias=None):
    """Valid-mode 2-D cross-correlation.

    Parameters
    ----------
    x : array, shape (t, f, c_in) or (batch, t, f, c_in)
    kernel : array, shape (k_t, k_f, c_in, c_out)
    stride : (s_t, s_f)
    bias : array of shape (c_out,), optional

    Returns
    -------
    array of shape ([batch,] t_out, f_out, c_out)
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    s_t, s_f = stride
    if s_t < 1 or s_f < 1:
        raise DimensionError(f"strides must be >= 1, got {stride}")
    if x.ndim not in (3, 4) or kernel.ndim != 4:
        raise DimensionError(f"bad conv operand ranks: input {x.shape}, kernel {kernel.shape}")
    t, f, c_in = x.shape[-3:]
    k_t, k_f, kc, _ = kernel.shape
    if kc != c_in:
        raise DimensionError(f"kernel expects {kc} input channels, input has {c_in}")
    if k_t > t or k_f > f:
        raise DimensionError(f"kernel {kernel.shape[:2]} larger than input {(t, f)}")
    t_out = conv_output_extent(t, k_t, s_t)
    steps = [
        conv_time_step(x[..., i * s_t:i * s_t + k_t, :, :], kernel, s_f, bias)
        for i in range(t_out)
    ]
    return check_finite(np.stack(steps, axis=-3), "conv2d_valid")


def softmax_lastdim(x):
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise DimensionError("softmax over an empty axis")
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def tanh(x):
    return np.tanh(x)


def relu(x):
    return np.maximum(x, 0)
