"""A small dense network (optionally fronted by a 1-D convolution) in numpy.

Everything is float64.  Parameters are immutable snapshots; ``adam_step``
returns new ones rather than mutating, which keeps target-network copies and
checkpoints trivially consistent.

Inputs may be a single vector ``(d,)`` or a batch ``(n, d)``.  For a batch,
``backward`` returns the sum of per-sample gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "relu")
VARIANTS = ("dense", "conv1d")
CONV_KERNEL = 3


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Layer sizes from input to output, e.g. ``(28, 768, 768, 768, 25)``.

    ``activation`` is one name for every hidden layer or one per hidden layer;
    the output layer is always linear.  The ``conv1d`` variant runs a
    ``conv_channels``-channel, width-3, same-padded tanh convolution over the
    input vector before the dense stack.
    """

    sizes: tuple = (28, 768, 768, 768, 25)
    activation: str | tuple = "relu"
    variant: str = "dense"
    conv_channels: int = 4

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not isinstance(self.activation, str):
            object.__setattr__(self, "activation", tuple(self.activation))
        errors = []
        if len(self.sizes) < 2:
            errors.append("need at least input and output sizes")
        if any(s < 1 for s in self.sizes):
            errors.append(f"all layer sizes must be >= 1, got {self.sizes}")
        if self.variant not in VARIANTS:
            errors.append(f"variant must be one of {VARIANTS}")
        if self.conv_channels < 1:
            errors.append("conv_channels must be >= 1")
        acts = self.hidden_activations if len(self.sizes) >= 2 else ()
        if len(acts) != max(len(self.sizes) - 2, 0):
            errors.append("one activation per hidden layer required")
        if any(a not in ACTIVATIONS for a in acts):
            errors.append(f"activations must be in {ACTIVATIONS}")
        if errors:
            raise ShapeError("; ".join(errors))

    @property
    def hidden_activations(self) -> tuple:
        n_hidden = len(self.sizes) - 2
        if isinstance(self.activation, str):
            return (self.activation,) * n_hidden
        return self.activation

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    @property
    def dense_sizes(self) -> tuple:
        if self.variant == "conv1d":
            return (self.conv_channels * self.sizes[0],) + self.sizes[1:]
        return self.sizes

    def shapes(self) -> list[tuple]:
        out = []
        if self.variant == "conv1d":
            out += [(self.conv_channels, CONV_KERNEL), (self.conv_channels,)]
        ds = self.dense_sizes
        for a, b in zip(ds[:-1], ds[1:]):
            out += [(a, b), (b,)]
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())

    def to_dict(self) -> dict:
        act = self.activation if isinstance(self.activation, str) else list(self.activation)
        return {"sizes": list(self.sizes), "activation": act,
                "variant": self.variant, "conv_channels": self.conv_channels}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        act = d.get("activation", "relu")
        return cls(tuple(d["sizes"]), act if isinstance(act, str) else tuple(act),
                   d.get("variant", "dense"), int(d.get("conv_channels", 4)))


@dataclass(frozen=True, eq=False)
class NetworkParams:
    spec: NetworkSpec
    arrays: tuple
    seed: int | None = None

    def __post_init__(self):
        arrays = []
        for a, shape in zip(self.arrays, self.spec.shapes()):
            # read-only float64 arrays are already owned snapshots
            if not (isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable):
                a = np.array(a, dtype=np.float64)
            if a.shape != shape:
                raise ShapeError(f"parameter shape {a.shape} does not match spec {shape}")
            a.setflags(write=False)
            arrays.append(a)
        if len(arrays) != len(self.spec.shapes()):
            raise ShapeError("wrong number of parameter arrays for spec")
        object.__setattr__(self, "arrays", tuple(arrays))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat, seed=None) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != spec.param_count():
            raise ShapeError(f"expected {spec.param_count()} values, got {flat.size}")
        arrays, i = [], 0
        for shape in spec.shapes():
            n = int(np.prod(shape))
            arrays.append(flat[i:i + n].reshape(shape))
            i += n
        return cls(spec, tuple(arrays), seed)

    def equals(self, other: "NetworkParams") -> bool:
        return (self.spec == other.spec
                and all(np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)))


def init_network(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Uniform fan-in scaled weights, zero biases.

    Layers feeding a relu use ``U(+-sqrt(6/fan_in))``; tanh and the linear
    output layer use ``U(+-sqrt(6/(fan_in+fan_out)))``.
    """
    rng = np.random.default_rng(seed)
    arrays = []
    if spec.variant == "conv1d":
        limit = np.sqrt(6.0 / (2 * CONV_KERNEL))
        arrays += [rng.uniform(-limit, limit, (spec.conv_channels, CONV_KERNEL)),
                   np.zeros(spec.conv_channels)]
    ds = spec.dense_sizes
    acts = spec.hidden_activations + (None,)
    for (fan_in, fan_out), act in zip(zip(ds[:-1], ds[1:]), acts):
        if act == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        arrays += [rng.uniform(-limit, limit, (fan_in, fan_out)), np.zeros(fan_out)]
    return NetworkParams(spec, tuple(arrays), seed)


def copy_params(src: NetworkParams) -> NetworkParams:
    return NetworkParams(src.spec, tuple(a.copy() for a in src.arrays), src.seed)


def _activate(name, z):
    return np.tanh(z) if name == "tanh" else np.maximum(z, 0.0)


def _activation_grad(name, z, a):
    return 1.0 - a * a if name == "tanh" else (z > 0).astype(np.float64)


def _conv_windows(x):
    pad = np.pad(x, ((0, 0), (1, 1)))
    L = x.shape[1]
    return np.stack([pad[:, k:k + L] for k in range(CONV_KERNEL)], axis=-1)


def _check_input(spec, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"input has shape {np.shape(x)}, network expects (..., {spec.input_dim})")
    return x, single


def _forward_trace(params: NetworkParams, x: np.ndarray):
    """Forward pass keeping what backward needs."""
    spec = params.spec
    arrays = params.arrays
    trace = {}
    h = x
    if spec.variant == "conv1d":
        kernel, bias = arrays[0], arrays[1]
        win = _conv_windows(x)
        z = np.einsum("nlk,ck->ncl", win, kernel) + bias[None, :, None]
        a = np.tanh(z)
        trace["conv"] = (win, a)
        h = a.reshape(x.shape[0], -1)
        arrays = arrays[2:]
    layers = []
    acts = spec.hidden_activations
    n_layers = len(arrays) // 2
    for i in range(n_layers):
        w, b = arrays[2 * i], arrays[2 * i + 1]
        z = h @ w + b
        if i < n_layers - 1:
            a = _activate(acts[i], z)
        else:
            a = z
        layers.append((h, z, a))
        h = a
    trace["dense"] = layers
    return h, trace


def forward(params: NetworkParams, x) -> np.ndarray:
    x, single = _check_input(params.spec, x)
    out, _ = _forward_trace(params, x)
    return out[0] if single else out


def _backward_trace(params: NetworkParams, trace, g: np.ndarray) -> list[np.ndarray]:
    spec = params.spec
    offset = 2 if spec.variant == "conv1d" else 0
    dense = params.arrays[offset:]
    acts = spec.hidden_activations
    layers = trace["dense"]
    grads: list = [None] * len(dense)
    for i in reversed(range(len(layers))):
        h_in, z, a = layers[i]
        if i < len(layers) - 1:
            g = g * _activation_grad(acts[i], z, a)
        grads[2 * i] = h_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0 or offset:
            g = g @ dense[2 * i].T
    if offset:
        win, a = trace["conv"]
        gz = g.reshape(a.shape) * (1.0 - a * a)
        grads = [np.einsum("ncl,nlk->ck", gz, win), gz.sum(axis=(0, 2))] + grads
    return grads


def backward(params: NetworkParams, x, loss_grad) -> list[np.ndarray]:
    """Gradients of ``sum(forward(params, x) * loss_grad)`` for every parameter."""
    x, single = _check_input(params.spec, x)
    g = np.asarray(loss_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (x.shape[0], params.spec.output_dim):
        raise ShapeError(f"loss_grad shape {np.shape(loss_grad)} does not match network output")
    _, trace = _forward_trace(params, x)
    return _backward_trace(params, trace, g)


def forward_backward(params: NetworkParams, x, grad_fn):
    """One forward pass, then backward with ``grad_fn(output) -> (loss, dloss/doutput)``."""
    x, _ = _check_input(params.spec, x)
    out, trace = _forward_trace(params, x)
    loss, g = grad_fn(out)
    return loss, _backward_trace(params, trace, g)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared difference and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: NetworkParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        z = tuple(np.zeros_like(a) for a in params.arrays)
        return cls(z, tuple(np.zeros_like(a) for a in params.arrays), 0, lr, beta1, beta2, eps)


def adam_step(params: NetworkParams, grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[NetworkParams, AdamState]:
    if len(grads) != len(params.arrays):
        raise ShapeError("gradient set does not match parameters")
    for g, p in zip(grads, params.arrays):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        for a in (p, m, v):
            a.setflags(write=False)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return (NetworkParams(params.spec, tuple(new_p), params.seed),
            replace(state, m=tuple(new_m), v=tuple(new_v), t=t))
