"""Fully connected tanh networks: specs, parameters, forward evaluation.

The forward map alternates affine layers with the activation and applies no
activation after the last layer.  Evaluation comes in two flavours: a plain
numpy path for cheap inference, and a tape-recorded path for training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var

_ACTIVATIONS = {"tanh"}
_INIT_SCHEMES = {"glorot"}


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: layer sizes, activation, init scheme, seed."""

    widths: tuple[int, ...]
    activation: str = "tanh"
    init_scheme: str = "glorot"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("all widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.init_scheme not in _INIT_SCHEMES:
            raise ValueError(f"unsupported init scheme {self.init_scheme!r}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def width(self) -> int:
        return max(self.widths)

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(self.depth))

    @classmethod
    def uniform(cls, n_in: int, hidden: int, n_hidden_layers: int, n_out: int, **kw):
        """Common PINN convention: equal hidden widths."""
        return cls((n_in,) + (hidden,) * n_hidden_layers + (n_out,), **kw)


@dataclass
class ParamSet:
    """Per-layer weight matrices (out x in) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def check_shapes(self, spec: NetworkSpec):
        w = spec.widths
        if len(self.weights) != spec.depth or len(self.biases) != spec.depth:
            raise ValueError("layer count mismatch")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (w[i + 1], w[i]) or b.shape != (w[i + 1],):
                raise ValueError(f"shape mismatch in layer {i + 1}")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, spec: NetworkSpec, vec: np.ndarray) -> "ParamSet":
        w = spec.widths
        weights, biases = [], []
        k = 0
        for i in range(spec.depth):
            n = w[i + 1] * w[i]
            weights.append(vec[k:k + n].reshape(w[i + 1], w[i]).copy())
            k += n
            biases.append(vec[k:k + w[i + 1]].copy())
            k += w[i + 1]
        if k != vec.size:
            raise ValueError("flat vector length mismatch")
        return cls(weights, biases)

    def copy(self) -> "ParamSet":
        return ParamSet([W.copy() for W in self.weights], [b.copy() for b in self.biases])


def initialize(spec: NetworkSpec) -> ParamSet:
    """Glorot-uniform weights, zero biases, deterministic in the spec seed."""
    rng = np.random.default_rng(spec.seed)
    w = spec.widths
    weights, biases = [], []
    for i in range(spec.depth):
        bound = np.sqrt(6.0 / (w[i] + w[i + 1]))
        weights.append(rng.uniform(-bound, bound, size=(w[i + 1], w[i])))
        biases.append(np.zeros(w[i + 1]))
    return ParamSet(weights, biases)


def forward(spec: NetworkSpec, params: ParamSet, x) -> np.ndarray:
    """Plain numpy forward pass.

    ``x`` may be a single point of length N0 or a batch of shape (n, N0);
    the output has matching leading shape.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != spec.widths[0]:
        raise ValueError(f"input dimension {a.shape[1]} != N0 {spec.widths[0]}")
    last = spec.depth - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ W.T + b
        if i != last:
            a = np.tanh(a)
    return a[0] if single else a


def augment_input(x, region_label: int) -> np.ndarray:
    """Append the region label as an extra coordinate (d -> d+1)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return np.append(x, float(region_label))


def piecewise_blend(f_plus, f_minus, z):
    """Continuous extension of a two-piece function over the label axis:
    (1+z)/2 * f_plus + (1-z)/2 * f_minus.  Evaluating at z=+1 / z=-1
    recovers the two pieces."""
    return 0.5 * (1.0 + z) * f_plus + 0.5 * (1.0 - z) * f_minus


# -- tape-recorded evaluation ----------------------------------------------


@dataclass
class TapeParams:
    """Differentiable parameter leaves for one network on one tape."""

    spec: NetworkSpec
    weight_vars: list[Var]
    bias_vars: list[Var]
    weight_t_vars: list[Var] = field(default_factory=list)  # cached transposes

    def set_values(self, tape: Tape, params: ParamSet):
        for v, W in zip(self.weight_vars, params.weights):
            tape.set_value(v, W)
        for v, b in zip(self.bias_vars, params.biases):
            tape.set_value(v, b)

    def all_vars(self) -> list[Var]:
        return self.weight_vars + self.bias_vars

    def gradient_as_paramset(self, grad) -> ParamSet:
        gw = [np.asarray(grad[v.idx]) for v in self.weight_vars]
        gb = [np.asarray(grad[v.idx]) for v in self.bias_vars]
        return ParamSet(gw, gb)


def make_tape_params(tape: Tape, spec: NetworkSpec, params: ParamSet) -> TapeParams:
    params.check_shapes(spec)
    wv = [tape.input(W) for W in params.weights]
    bv = [tape.input(b) for b in params.biases]
    tp = TapeParams(spec, wv, bv)
    tp.weight_t_vars = [ad.transpose(v) for v in wv]
    return tp


def tape_forward(tape: Tape, tp: TapeParams, x: Var) -> Var:
    """Forward pass recorded on the tape; ``x`` is an (n, N0) node."""
    if np.shape(x.value)[1] != tp.spec.widths[0]:
        raise ValueError("input dimension mismatch")
    a = x
    last = tp.spec.depth - 1
    for i in range(tp.spec.depth):
        a = ad.matmul(a, tp.weight_t_vars[i]) + tp.bias_vars[i]
        if i != last:
            a = ad.tanh(a)
    return a


# -- serialization ----------------------------------------------------------
# Text format: first line is the widths list, then one 64-bit float per line
# in layer order (W row-major, then b).  See README for the exact contract.


def save_params(path, spec: NetworkSpec, params: ParamSet):
    params.check_shapes(spec)
    with open(path, "w") as f:
        f.write(" ".join(str(w) for w in spec.widths) + "\n")
        for v in params.flatten():
            f.write(f"{float(v)!r}\n")


def load_params(path) -> tuple[NetworkSpec, ParamSet]:
    with open(path) as f:
        widths = tuple(int(w) for w in f.readline().split())
        spec = NetworkSpec(widths)
        vals = np.array([float(line) for line in f if line.strip()])
    return spec, ParamSet.unflatten(spec, vals)
