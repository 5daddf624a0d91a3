"""Declarative layer stacks.

A model is a tuple of layer specs applied to a ``(frames, n_mels)`` input.
Front-end convolutions come first, then at most one GRU, then the head
(attention, time summation, dense layers). Dropout may appear anywhere and
is the identity at inference.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple, Union

from ..errors import BuildError
from ..tensors import conv_output_extent

DIVISOR_MODES = ("dk", "sqrt-dk")
ACTIVATIONS = ("relu", "tanh", "linear", "softmax")


@dataclass(frozen=True)
class Conv:
    k_t: int
    k_f: int
    s_t: int
    s_f: int
    c_out: int
    batchnorm: bool = True
    activation: str = "relu"


@dataclass(frozen=True)
class DeltaFixedConv:
    """Non-trainable 2x1 time difference with weights [-1, 1]."""


@dataclass(frozen=True)
class Gru:
    d: int


@dataclass(frozen=True)
class Attention:
    d: int


@dataclass(frozen=True)
class TimeSum:
    pass


@dataclass(frozen=True)
class Dense:
    out: int
    activation: str = "relu"


@dataclass(frozen=True)
class Dropout:
    rate: float


Layer = Union[Conv, DeltaFixedConv, Gru, Attention, TimeSum, Dense, Dropout]
LAYER_TYPES = {cls.__name__: cls for cls in (Conv, DeltaFixedConv, Gru, Attention, TimeSum, Dense, Dropout)}


@dataclass(frozen=True)
class ModelConfig:
    frames: int
    n_mels: int
    layers: Tuple[Layer, ...]
    divisor: str = "dk"
    name: str = "custom"
    # per-layer output shapes (batch axis omitted), filled by validation
    shapes: Tuple[Tuple[int, ...], ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "shapes", tuple(infer_shapes(self)))

    @property
    def input_shape(self):
        return (self.frames, self.n_mels)

    @property
    def front_end(self):
        """Indices of the leading (streamable) convolution layers."""
        idx = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, (Conv, DeltaFixedConv)):
                idx.append(i)
            elif isinstance(layer, Dropout):
                continue
            else:
                break
        return idx

    @property
    def gru_index(self):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Gru):
                return i
        return None

    def shape_before(self, i):
        return self.shapes[i - 1] if i > 0 else (self.frames, self.n_mels, 1)

    def has_batchnorm(self):
        return any(isinstance(l, Conv) and l.batchnorm for l in self.layers)

    def without_attention(self):
        """Ablation variant: TimeSum directly over the GRU output."""
        layers = tuple(l for l in self.layers if not isinstance(l, Attention))
        return replace(self, layers=layers, name=f"{self.name}-noattn")

    def with_delta(self):
        """Prepend the fixed delta layer; the input grows by one frame."""
        if any(isinstance(l, DeltaFixedConv) for l in self.layers):
            return self
        return replace(self, frames=self.frames + 1, layers=(DeltaFixedConv(),) + self.layers,
                       name=f"{self.name}-delta")

    def with_bins(self, n_mels):
        return replace(self, n_mels=n_mels)

    def with_divisor(self, divisor):
        return replace(self, divisor=divisor)

    def folded(self):
        layers = tuple(replace(l, batchnorm=False) if isinstance(l, Conv) else l for l in self.layers)
        return replace(self, layers=layers)

    def to_dict(self):
        return {
            "name": self.name,
            "frames": self.frames,
            "n_mels": self.n_mels,
            "divisor": self.divisor,
            "layers": [{"type": type(l).__name__, **asdict(l)} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        layers = []
        for spec in d["layers"]:
            spec = dict(spec)
            kind = spec.pop("type")
            if kind not in LAYER_TYPES:
                raise BuildError(f"unknown layer type {kind!r}")
            layers.append(LAYER_TYPES[kind](**spec))
        return cls(frames=d["frames"], n_mels=d["n_mels"], layers=tuple(layers),
                   divisor=d.get("divisor", "dk"), name=d.get("name", "custom"))


def infer_shapes(cfg):
    """Check the stack end to end and return each layer's output shape."""
    if cfg.frames < 1 or cfg.n_mels < 1:
        raise BuildError(f"bad input spec {cfg.frames}x{cfg.n_mels}")
    if cfg.divisor not in DIVISOR_MODES:
        raise BuildError(f"divisor must be one of {DIVISOR_MODES}, got {cfg.divisor!r}")
    shape = (cfg.frames, cfg.n_mels, 1)
    shapes = []
    seen_gru = None
    seen_non_conv = False
    for i, layer in enumerate(cfg.layers):
        where = f"layer {i} ({type(layer).__name__})"
        if isinstance(layer, (Conv, DeltaFixedConv)):
            if seen_non_conv:
                raise BuildError(f"{where}: convolutions must precede all other layers")
            if len(shape) != 3:
                raise BuildError(f"{where}: needs time x freq x channel input, got {shape}")
            t, f, c = shape
            if isinstance(layer, DeltaFixedConv):
                if c != 1 or t < 2:
                    raise BuildError(f"{where}: needs a single-channel input with >= 2 frames")
                shape = (t - 1, f, 1)
            else:
                if min(layer.k_t, layer.k_f, layer.s_t, layer.s_f, layer.c_out) < 1:
                    raise BuildError(f"{where}: kernel, stride and channels must be positive")
                if layer.k_t > t or layer.k_f > f:
                    raise BuildError(f"{where}: kernel {layer.k_t}x{layer.k_f} larger than input {t}x{f}")
                if layer.activation not in ACTIVATIONS[:3]:
                    raise BuildError(f"{where}: activation {layer.activation!r} not allowed on conv")
                shape = (conv_output_extent(t, layer.k_t, layer.s_t),
                         conv_output_extent(f, layer.k_f, layer.s_f), layer.c_out)
        elif isinstance(layer, Dropout):
            if not 0 <= layer.rate < 1:
                raise BuildError(f"{where}: dropout rate must be in [0, 1)")
        else:
            seen_non_conv = True
            if isinstance(layer, Gru):
                if seen_gru is not None:
                    raise BuildError(f"{where}: at most one GRU is supported")
                if len(shape) == 3:
                    shape = (shape[0], shape[1] * shape[2])
                if len(shape) != 2:
                    raise BuildError(f"{where}: needs a time-major sequence, got {shape}")
                if layer.d < 1:
                    raise BuildError(f"{where}: d must be positive")
                seen_gru = layer
                shape = (shape[0], layer.d)
            elif isinstance(layer, Attention):
                if seen_gru is None:
                    raise BuildError(f"{where}: attention requires a preceding GRU")
                if len(shape) != 2 or shape[1] != layer.d:
                    raise BuildError(f"{where}: expects (t', {layer.d}) input, got {shape}")
            elif isinstance(layer, TimeSum):
                if len(shape) != 2:
                    raise BuildError(f"{where}: TimeSum requires rank-2 time-major input, got {shape}")
                shape = (shape[1],)
            elif isinstance(layer, Dense):
                if layer.activation not in ACTIVATIONS:
                    raise BuildError(f"{where}: unknown activation {layer.activation!r}")
                if layer.out < 1:
                    raise BuildError(f"{where}: output width must be positive")
                shape = (layer.out,)
            else:
                raise BuildError(f"{where}: unsupported layer")
        shapes.append(shape)
    if not cfg.layers:
        raise BuildError("empty layer stack")
    last = cfg.layers[-1]
    if not (isinstance(last, Dense) and last.out == 2 and last.activation == "softmax"):
        raise BuildError("final layer must be Dense(2, softmax)")
    for i, layer in enumerate(cfg.layers[:-1]):
        if isinstance(layer, Dense) and layer.activation == "softmax":
            raise BuildError(f"layer {i}: softmax is only allowed on the output layer")
    return shapes


def _crnn(name, n_mels, convs, d, hidden, attention=True, dropout=0.3):
    layers = [Conv(*c) for c in convs]
    layers += [Gru(d), Dropout(dropout)]
    if attention:
        layers.append(Attention(d))
    layers += [TimeSum(), Dense(hidden, "relu"), Dropout(dropout), Dense(2, "softmax")]
    return ModelConfig(frames=100, n_mels=n_mels, layers=tuple(layers), name=name)


def crnn239k_ref():
    """Reference 250k-budget Tiny-CRNN on 100x64 LFBEs.

    Conv outputs are 10 x (4*128 = 512) with a 28-frame receptive field.
    """
    return _crnn("crnn239k-ref", 64,
                 [(4, 5, 2, 2, 8), (5, 7, 2, 2, 32), (5, 9, 2, 1, 128)], d=24, hidden=128)


def crnn58k_ref():
    """Reference 50k-budget Tiny-CRNN on 100x20 LFBEs, channels 8/16/32."""
    return _crnn("crnn58k-ref", 20,
                 [(4, 1, 2, 1, 8), (5, 3, 2, 2, 16), (5, 3, 2, 1, 32)], d=48, hidden=64)


def cnn_like():
    """Five conv layers and one dense layer, in the spirit of the CNN baselines."""
    convs = [(5, 3, 2, 2, 16), (5, 3, 2, 2, 32), (3, 3, 2, 2, 64), (3, 3, 2, 2, 128), (3, 3, 1, 1, 128)]
    layers = tuple(Conv(*c) for c in convs) + (Dropout(0.3), Dense(2, "softmax"))
    return ModelConfig(frames=100, n_mels=64, layers=layers, name="cnn-like")


def dnn_like():
    """Six fully connected layers on the flattened 100x20 window."""
    layers = (Dense(96), Dense(128), Dense(128), Dropout(0.3), Dense(64), Dense(32), Dense(2, "softmax"))
    return ModelConfig(frames=100, n_mels=20, layers=layers, name="dnn-like")


REFERENCE_CONFIGS = {
    "crnn239k-ref": crnn239k_ref,
    "crnn58k-ref": crnn58k_ref,
    "cnn-like": cnn_like,
    "dnn-like": dnn_like,
}


def reference_config(name):
    try:
        return REFERENCE_CONFIGS[name]()
    except KeyError:
        raise BuildError(f"unknown config {name!r}; choose from {sorted(REFERENCE_CONFIGS)}") from None
