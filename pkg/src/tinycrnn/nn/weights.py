"""Parameter store, initialisation, batchnorm folding and model files."""

import json
from collections import OrderedDict

import numpy as np

from ..errors import BuildError, FoldError, InputError
from ..tensors import DTYPE
from .config import Attention, Conv, Dense, Gru, ModelConfig

FORMAT_NAME = "tinycrnn-model"
FORMAT_VERSION = 1
BN_EPS = 1e-5

# running statistics are stored but never trained
BUFFER_SUFFIXES = ("bn_mean", "bn_var")

GRU_GATES = ("z", "r", "h")


def param_shapes(cfg):
    """Ordered ``name -> shape`` for every stored scalar, in declaration order."""
    shapes = OrderedDict()
    for i, layer in enumerate(cfg.layers):
        inp = cfg.shape_before(i)
        if isinstance(layer, Conv):
            shapes[f"{i}.kernel"] = (layer.k_t, layer.k_f, inp[2], layer.c_out)
            shapes[f"{i}.bias"] = (layer.c_out,)
            if layer.batchnorm:
                for name in ("bn_gamma", "bn_beta", "bn_mean", "bn_var"):
                    shapes[f"{i}.{name}"] = (layer.c_out,)
        elif isinstance(layer, Gru):
            n_in = int(np.prod(inp[1:]))
            for g in GRU_GATES:
                shapes[f"{i}.W_{g}"] = (layer.d, n_in)
            for g in GRU_GATES:
                shapes[f"{i}.U_{g}"] = (layer.d, layer.d)
            for g in GRU_GATES:
                shapes[f"{i}.b_{g}"] = (layer.d,)
        elif isinstance(layer, Attention):
            for p in ("Q", "K", "V"):
                shapes[f"{i}.W_{p}"] = (layer.d, layer.d)
                shapes[f"{i}.b_{p}"] = (layer.d,)
        elif isinstance(layer, Dense):
            shapes[f"{i}.W"] = (int(np.prod(inp)), layer.out)
            shapes[f"{i}.b"] = (layer.out,)
    return shapes


def is_buffer(name):
    return name.endswith(BUFFER_SUFFIXES)


class Weights:
    """Flat ordered mapping of parameter name to array.

    Names are ``"<layer index>.<param>"``, e.g. ``"3.W_z"`` or ``"0.bn_var"``.
    """

    def __init__(self, params):
        self.params = OrderedDict(params)

    def __getitem__(self, name):
        return self.params[name]

    def __setitem__(self, name, value):
        self.params[name] = value

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def layer(self, i):
        """Parameters of layer ``i`` keyed by their short name."""
        prefix = f"{i}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def trainable(self):
        return [k for k in self.params if not is_buffer(k)]

    def copy(self):
        return Weights((k, v.copy()) for k, v in self.params.items())

    def astype(self, dtype):
        return Weights((k, v.astype(dtype)) for k, v in self.params.items())

    def n_scalars(self):
        return int(sum(v.size for v in self.params.values()))

    def check(self, cfg):
        expected = param_shapes(cfg)
        if list(expected) != list(self.params):
            raise BuildError("weights do not match config parameter layout")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise BuildError(f"{k}: expected shape {shape}, got {self.params[k].shape}")

    def equal(self, other):
        return list(self.params) == list(other.params) and all(
            np.array_equal(self.params[k], other.params[k]) for k in self.params)


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def init_weights(cfg, seed=0):
    """Deterministic initial weights for ``cfg``.

    Conv and dense kernels use Glorot-uniform, GRU recurrent matrices are
    orthogonal (QR of a seeded Gaussian), biases start at zero and
    batchnorm starts as the identity normalisation. The output layer starts
    at zero so a fresh model predicts exactly 50/50.
    """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    last = str(len(cfg.layers) - 1)
    for name, shape in param_shapes(cfg).items():
        i, pname = name.split(".", 1)
        layer = cfg.layers[int(i)]
        if pname == "kernel":
            k_t, k_f, c_in, c_out = shape
            value = _glorot(rng, shape, k_t * k_f * c_in, k_t * k_f * c_out)
        elif pname in ("bn_gamma", "bn_var"):
            value = np.ones(shape)
        elif pname.startswith("U_"):
            value = _orthogonal(rng, shape[0])
        elif pname.startswith("W"):
            if isinstance(layer, Gru):
                fan_out, fan_in = shape
            else:
                fan_in, fan_out = shape
            value = _glorot(rng, shape, fan_in, fan_out)
            if i == last:
                value = np.zeros(shape)
        else:
            value = np.zeros(shape)
        params[name] = value.astype(DTYPE)
    return Weights(params)


def fold_batchnorm(cfg, weights, eps=BN_EPS):
    """Absorb each conv layer's batchnorm into its kernel and bias.

    Returns ``(folded_cfg, folded_weights)``; the folded config has no
    batchnorm layers, so inference on it never normalises.
    """
    out = OrderedDict()
    for i, layer in enumerate(cfg.layers):
        p = weights.layer(i)
        if isinstance(layer, Conv) and layer.batchnorm:
            var = p["bn_var"].astype(np.float64)
            if np.any(var <= 0):
                raise FoldError(f"layer {i}: batchnorm variance has non-positive entries "
                                "(statistics never populated?)")
            scale = p["bn_gamma"] / np.sqrt(var + eps)
            dtype = p["kernel"].dtype
            out[f"{i}.kernel"] = (p["kernel"] * scale).astype(dtype)
            out[f"{i}.bias"] = ((p["bias"] - p["bn_mean"]) * scale + p["bn_beta"]).astype(dtype)
        else:
            for k, v in p.items():
                out[f"{i}.{k}"] = v.copy()
    folded_cfg = cfg.folded()
    folded = Weights(out)
    folded.check(folded_cfg)
    return folded_cfg, folded


def save_model(path, cfg, weights, seed=None):
    """Write a model file.

    Line 1 is a JSON header; the rest is every parameter as little-endian
    float32 in declaration order.
    """
    weights.check(cfg)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "divisor": cfg.divisor,
        "seed": seed,
        "config": cfg.to_dict(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for v in weights.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_model(path):
    """Read a model file; returns ``(cfg, weights, header)``."""
    with open(path, "rb") as fh:
        line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not a model file ({exc})") from None
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported model format {header.get('format')!r} "
                         f"v{header.get('version')}")
    cfg = ModelConfig.from_dict(header["config"])
    shapes = param_shapes(cfg)
    flat = np.frombuffer(body, dtype="<f4")
    total = sum(int(np.prod(s)) for s in shapes.values())
    if flat.size != total:
        raise InputError(f"{path}: expected {total} floats, found {flat.size}")
    params = OrderedDict()
    offset = 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        params[name] = flat[offset:offset + n].reshape(shape).astype(DTYPE)
        offset += n
    return cfg, Weights(params), header
