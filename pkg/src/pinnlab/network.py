"""Fully connected networks evaluated on floats, tape Vars and jets.

Flat parameter layout, layer by layer: the weight matrix (fan_in x fan_out,
row-major) followed by the bias vector. Hidden layers apply the activation,
the output layer is linear.

An optional fixed affine map may wrap the network: inputs are sent to
``(x - in_offset) * in_scale`` before the first layer and outputs to
``y * out_scale + out_offset`` after the last. These constants are not
trained; they only exist to condition problems with large raw ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Jet2

ACTIVATIONS = ("sine", "tanh")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple
    output_dim: int = 1
    activation: str = "sine"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise NetworkError(f"all layer widths must be >= 1: {self}")
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def sizes(self):
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self):
        s = self.sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def layer_slices(self):
        """``[(w_slice, w_shape, b_slice), ...]`` into the flat vector."""
        out, o = [], 0
        s = self.sizes
        for a, b in zip(s[:-1], s[1:]):
            out.append((slice(o, o + a * b), (a, b), slice(o + a * b, o + a * b + b)))
            o += a * b + b
        return out


@dataclass
class Mlp:
    spec: MlpSpec
    params: np.ndarray
    in_offset: np.ndarray = field(default=None)
    in_scale: np.ndarray = field(default=None)
    out_offset: float = 0.0
    out_scale: float = 1.0

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.n_params,):
            raise NetworkError(
                f"expected {self.spec.n_params} parameters, got {self.params.shape}"
            )
        d = self.spec.input_dim
        self.in_offset = np.zeros(d) if self.in_offset is None else np.asarray(self.in_offset, float)
        self.in_scale = np.ones(d) if self.in_scale is None else np.asarray(self.in_scale, float)

    def get_flat(self):
        return self.params.copy()

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise NetworkError(f"expected {self.params.shape}, got {flat.shape}")
        self.params = flat.copy()

    def with_params(self, flat):
        return Mlp(self.spec, flat, self.in_offset, self.in_scale, self.out_offset, self.out_scale)

    @property
    def has_scaling(self):
        return (
            np.any(self.in_offset != 0.0)
            or np.any(self.in_scale != 1.0)
            or self.out_offset != 0.0
            or self.out_scale != 1.0
        )


def init(spec, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(spec.n_params)
    for w, (a, b), _ in spec.layer_slices():
        lim = math.sqrt(6.0 / (a + b))
        flat[w] = rng.uniform(-lim, lim, size=a * b)
    return Mlp(spec, flat)


def fit_scaling(net, inputs, targets=None):
    """Map the bounding box of ``inputs`` to [-1, 1]; standardize ``targets``."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    net.in_offset = lo + span / 2.0
    net.in_scale = 2.0 / span
    if targets is not None:
        y = np.asarray(targets, dtype=np.float64)
        net.out_offset = float(y.mean())
        sd = float(y.std())
        net.out_scale = sd if sd > 0 else 1.0
    return net


def _act(name, z):
    return np.sin(z) if name == "sine" else np.tanh(z)


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != net.spec.input_dim:
        raise NetworkError(
            f"input dimension mismatch: expected {net.spec.input_dim}, got shape {x.shape}"
        )
    return x2, single


def forward(net, x, params=None):
    """Evaluate on plain floats. ``x`` is one input vector or an ``(N, d)`` batch."""
    x2, single = _check_input(net, x)
    p = net.params if params is None else params
    h = (x2 - net.in_offset) * net.in_scale
    layers = net.spec.layer_slices()
    for i, (w, shape, b) in enumerate(layers):
        h = h @ p[w].reshape(shape) + p[b]
        if i < len(layers) - 1:
            h = _act(net.spec.activation, h)
    out = h * net.out_scale + net.out_offset
    return out[0] if single else out


def _layer_vars(net, theta):
    """Weight/bias Vars sliced out of the flat parameter Var ``theta``."""
    out = []
    for w, shape, b in net.spec.layer_slices():
        out.append((ad.reshape(theta[w], shape), theta[b]))
    return out


def forward_var(net, x, theta):
    """Evaluate on a batch with parameters taken from the tape Var ``theta``."""
    x2, _ = _check_input(net, x)
    h = (x2 - net.in_offset) * net.in_scale
    layers = _layer_vars(net, theta)
    for i, (w, b) in enumerate(layers):
        h = ad.add(ad.matmul(h, w), b)
        if i < len(layers) - 1:
            h = ad.sin(h) if net.spec.activation == "sine" else ad.tanh(h)
    return ad.add(ad.mul(h, net.out_scale), net.out_offset)


def forward_jet(net, x, direction, theta=None):
    """Value, first and second derivative of the output along input ``direction``.

    With ``theta`` (a tape Var holding the flat parameters) the coefficients
    are tape nodes; without it they are plain arrays. For a batch ``x`` of
    shape ``(N, d)`` each coefficient has shape ``(N, output_dim)``; for one
    input vector the leading axis is dropped.
    """
    x2, single = _check_input(net, x)
    if not 0 <= direction < net.spec.input_dim:
        raise IndexError(f"direction {direction} out of range for input dimension {net.spec.input_dim}")
    if theta is None:
        tape = ad.Tape()
        theta = tape.var(net.params)
        plain = True
    else:
        plain = False
    layers = _layer_vars(net, theta)
    w0, b0 = layers[0]
    # The first layer sees constant inputs: d1 is a row of the weight matrix, d2 is zero.
    xs = (x2 - net.in_offset) * net.in_scale
    jet = Jet2(
        ad.add(ad.matmul(xs, w0), b0),
        ad.mul(w0[direction], net.in_scale[direction]),
        0.0,
    )
    for w, b in layers[1:]:
        jet = jet.sin() if net.spec.activation == "sine" else jet.tanh()
        jet = jet @ w
        jet = Jet2(ad.add(jet.v, b), jet.d1, jet.d2)
    if net.out_scale != 1.0:
        jet = jet * net.out_scale
    jet = jet + net.out_offset
    full = (x2.shape[0], net.spec.output_dim)
    d1, d2 = (c if np.shape(ad._val(c)) == full else ad.add(c, np.zeros(full)) for c in (jet.d1, jet.d2))
    jet = Jet2(jet.v, d1, d2)
    if plain:
        v, d1, d2 = jet.values()
        jet = Jet2(v, d1, d2)
    if single:
        jet = Jet2(*(c[0] for c in (jet.v, jet.d1, jet.d2)))
    return jet


# -- checkpoints -----------------------------------------------------------------

_HEADER = "# pinnlab-mlp v1"


def _fmt(x):
    return format(float(x), ".17g")


def save_checkpoint(net, path):
    """Plain-text checkpoint: header lines, then one parameter per line.

    ::

        # pinnlab-mlp v1
        spec input_dim=1 hidden=32,32,32 output_dim=1 activation=sine
        scaling in_offset=... in_scale=... out_offset=... out_scale=...
        <param 0>
        <param 1>
        ...
    """
    s = net.spec
    lines = [
        _HEADER,
        f"spec input_dim={s.input_dim} hidden={','.join(map(str, s.hidden))} "
        f"output_dim={s.output_dim} activation={s.activation}",
        "scaling in_offset={} in_scale={} out_offset={} out_scale={}".format(
            ",".join(map(_fmt, net.in_offset)),
            ",".join(map(_fmt, net.in_scale)),
            _fmt(net.out_offset),
            _fmt(net.out_scale),
        ),
    ]
    lines.extend(_fmt(p) for p in net.params)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise NetworkError(f"{path}: not a pinnlab checkpoint")

    def fields(line, tag):
        parts = line.split()
        if not parts or parts[0] != tag:
            raise NetworkError(f"{path}: expected '{tag}' line, got {line!r}")
        return dict(p.split("=", 1) for p in parts[1:])

    sf = fields(lines[1], "spec")
    spec = MlpSpec(
        int(sf["input_dim"]),
        tuple(int(h) for h in sf["hidden"].split(",") if h),
        int(sf["output_dim"]),
        sf["activation"],
    )
    sc = fields(lines[2], "scaling")
    params = np.array([float(v) for v in lines[3:] if v.strip()])
    return Mlp(
        spec,
        params,
        np.array([float(v) for v in sc["in_offset"].split(",")]),
        np.array([float(v) for v in sc["in_scale"].split(",")]),
        float(sc["out_offset"]),
        float(sc["out_scale"]),
    )
