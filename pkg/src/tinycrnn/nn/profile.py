"""Footprint accounting: parameter and multiply counts, receptive field."""

from dataclasses import dataclass

import numpy as np

from .config import Attention, Conv, DeltaFixedConv, Dense, Gru
from .weights import param_shapes


@dataclass(frozen=True)
class LayerFootprint:
    index: int
    kind: str
    params: int
    multiplies: int


@dataclass(frozen=True)
class Footprint:
    params: int
    multiplies: int
    biases: int
    layers: tuple

    def table(self):
        lines = [f"{'layer':<6}{'type':<16}{'params':>10}{'multiplies':>14}"]
        for lf in self.layers:
            lines.append(f"{lf.index:<6}{lf.kind:<16}{lf.params:>10}{lf.multiplies:>14}")
        lines.append(f"{'total':<22}{self.params:>10}{self.multiplies:>14}")
        return "\n".join(lines)


def receptive_field(conv_specs, t=None):
    """Receptive field (in input frames) of a stack of temporal convolutions.

    ``conv_specs`` is a list of ``(k_t, s_t)``. With ``t`` given, also
    returns how many output steps a ``t``-frame input produces.
    """
    rf, jump = 1, 1
    for k, s in conv_specs:
        rf += (k - 1) * jump
        jump *= s
    if t is None:
        return rf
    n = t
    for k, s in conv_specs:
        n = (n - k) // s + 1
    return rf, n


def _is_bias(pname):
    return pname in ("bias", "b") or pname.startswith("b_")


def temporal_specs(cfg):
    specs = []
    for i in cfg.front_end:
        layer = cfg.layers[i]
        specs.append((2, 1) if isinstance(layer, DeltaFixedConv) else (layer.k_t, layer.s_t))
    return specs


def frames_per_step(cfg):
    """Input frames between consecutive front-end output steps."""
    return int(np.prod([s for _, s in temporal_specs(cfg)] or [1]))


def profile(cfg):
    """Count stored parameters and per-window multiplications.

    Parameters include batchnorm's four per-channel vectors. Multiplies
    cover one full input window; additions, nonlinearities and batchnorm
    are not counted.
    """
    shapes = param_shapes(cfg)
    rows = []
    total_bias = 0
    for i, layer in enumerate(cfg.layers):
        n_params = sum(int(np.prod(s)) for k, s in shapes.items() if k.split(".")[0] == str(i))
        total_bias += sum(int(np.prod(s)) for k, s in shapes.items()
                          if k.split(".")[0] == str(i) and _is_bias(k.split(".")[1]))
        inp = cfg.shape_before(i)
        out = cfg.shapes[i]
        if isinstance(layer, Conv):
            mult = out[0] * out[1] * layer.k_t * layer.k_f * inp[2] * layer.c_out
        elif isinstance(layer, DeltaFixedConv):
            mult = out[0] * out[1] * 2
        elif isinstance(layer, Gru):
            t, d = out
            n_in = int(np.prod(inp[1:]))
            mult = t * 3 * (n_in * d + d * d)
        elif isinstance(layer, Attention):
            t, d = out
            mult = 3 * t * d * d + 2 * t * t * d
        elif isinstance(layer, Dense):
            mult = int(np.prod(inp)) * layer.out
        else:
            mult = 0
        if n_params or mult:
            rows.append(LayerFootprint(i, type(layer).__name__, n_params, int(mult)))
    return Footprint(params=sum(r.params for r in rows),
                     multiplies=sum(r.multiplies for r in rows),
                     biases=total_bias, layers=tuple(rows))
