"""Dense feedforward networks with exact backprop, Adam and Polyak blending.

Everything works on row-major batches: an input of shape ``(n, in_dim)``
maps to an output of shape ``(n, out_dim)``.  Weights are stored as
``(in_dim, out_dim)`` matrices so a layer is ``x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HEADS = ("linear", "tanh", "gaussian")
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@lru_cache(maxsize=None)
def _layout_cached(layer_dims: tuple):
    spans, off = [], 0
    for i in range(len(layer_dims) - 1):
        n_in, n_out = layer_dims[i], layer_dims[i + 1]
        spans.append((off, (n_in, n_out)))
        off += n_in * n_out
        spans.append((off, (n_out,)))
        off += n_out
    return tuple(spans), off


def _layout(layer_dims):
    """Offsets of (W0, b0, W1, b1, ...) inside the flat parameter vector."""
    return _layout_cached(tuple(int(d) for d in layer_dims))


def _views(theta, layer_dims):
    spans, _ = _layout(layer_dims)
    arrays = [theta[o:o + math.prod(shape)].reshape(shape) for o, shape in spans]
    return arrays[0::2], arrays[1::2]


class Mlp:
    """Weights and biases of a ReLU network, stored in one flat vector.

    ``layer_dims`` lists every width including input and output.  Weights
    are ``(in, out)`` views into :attr:`theta` (row-major), so optimizers and
    target blending act on a single array.  For the ``gaussian`` head the
    last layer has ``2 * act_dim`` units: mean first, then the clamped log
    standard deviation.
    """

    def __init__(self, layer_dims, weights, biases, head: str = "linear"):
        self.layer_dims = [int(d) for d in layer_dims]
        self.head = head
        if head not in HEADS:
            raise ValueError(f"unknown output head {head!r}")
        if len(weights) != len(self.layer_dims) - 1 or len(biases) != len(weights):
            raise ValueError("layer count does not match layer_dims")
        for i, (w, b) in enumerate(zip(weights, biases)):
            shape = (self.layer_dims[i], self.layer_dims[i + 1])
            if np.shape(w) != shape or np.shape(b) != (shape[1],):
                raise ValueError(f"layer {i}: expected weight {shape}, got {np.shape(w)}")
        if head == "gaussian" and self.layer_dims[-1] % 2:
            raise ValueError("gaussian head needs an even output width")
        _, n = _layout(self.layer_dims)
        self.theta = np.empty(n)
        self.weights, self.biases = _views(self.theta, self.layer_dims)
        for dst, src in zip(self.arrays(), [a for pair in zip(weights, biases) for a in pair]):
            dst[...] = src

    @classmethod
    def from_flat(cls, layer_dims, theta, head: str = "linear") -> "Mlp":
        dims = [int(d) for d in layer_dims]
        theta = np.asarray(theta, dtype=np.float64)
        _, n = _layout(dims)
        if theta.shape != (n,):
            raise ValueError(f"expected {n} parameters for layer_dims {dims}, got {theta.size}")
        w, b = _views(theta, dims)
        return cls(dims, w, b, head)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "Mlp":
        return Mlp.from_flat(self.layer_dims, self.theta.copy(), self.head)

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return self.theta.size

    def __eq__(self, other):
        return (isinstance(other, Mlp) and self.layer_dims == other.layer_dims
                and self.head == other.head and np.array_equal(self.theta, other.theta))

    def __repr__(self):
        return f"Mlp(layer_dims={self.layer_dims}, head={self.head!r})"


def init_mlp(layer_dims, rng: np.random.Generator, head: str = "linear",
             final_scale: float = 1.0) -> Mlp:
    """Uniform fan-in initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    dims = [int(d) for d in layer_dims]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[i])
        w = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1]))
        b = rng.uniform(-bound, bound, size=dims[i + 1])
        if i == len(dims) - 2:
            w *= final_scale
            b *= final_scale
        weights.append(w)
        biases.append(b)
    return Mlp(dims, weights, biases, head)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each affine layer
    pre: list[np.ndarray]  # affine output of each layer
    output: np.ndarray
    squeeze: bool = False


def mlp_forward(params: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a single vector or a batch.

    Returns the head output and a cache for :func:`mlp_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match layer_dims[0]={params.in_dim}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    if params.head == "tanh":
        out = np.tanh(h)
    elif params.head == "gaussian":
        k = params.out_dim // 2
        out = np.concatenate([h[:, :k], np.clip(h[:, k:], LOG_STD_MIN, LOG_STD_MAX)], axis=1)
    else:
        out = h
    cache = ForwardCache(inputs, pre, out, squeeze)
    return (out[0] if squeeze else out), cache


class Gradients:
    """Parameter gradients laid out exactly like :class:`Mlp`."""

    def __init__(self, layer_dims):
        _, n = _layout(layer_dims)
        self.flat = np.zeros(n)
        self.weights, self.biases = _views(self.flat, layer_dims)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def mlp_backward(params: Mlp, cache: ForwardCache, output_gradient) -> tuple[Gradients, np.ndarray]:
    """Reverse-mode pass; gradients are summed over the batch.

    Returns parameter gradients and the gradient with respect to the input.
    """
    g = np.asarray(output_gradient, dtype=np.float64)
    if cache.squeeze and g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.output.shape:
        raise ValueError(f"output gradient shape {g.shape} does not match output {cache.output.shape}")
    z_last = cache.pre[-1]
    if params.head == "tanh":
        g = g * (1.0 - cache.output ** 2)
    elif params.head == "gaussian":
        k = params.out_dim // 2
        ls = z_last[:, k:]
        inside = (ls >= LOG_STD_MIN) & (ls <= LOG_STD_MAX)
        g = np.concatenate([g[:, :k], g[:, k:] * inside], axis=1)
    grads = Gradients(params.layer_dims)
    for i in range(len(params.weights) - 1, -1, -1):
        np.matmul(cache.inputs[i].T, g, out=grads.weights[i])
        np.sum(g, axis=0, out=grads.biases[i])
        g = g @ params.weights[i].T
        if i > 0:
            g *= cache.pre[i - 1] > 0
    grad_in = g[0] if cache.squeeze else g
    return grads, grad_in


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)

    @classmethod
    def for_params(cls, params: Mlp, **kw) -> "AdamState":
        return cls.for_arrays([params.theta], **kw)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.t, self.beta1, self.beta2, self.eps)


def adam_update(arrays, grads, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam step applied in place to ``arrays``."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient and optimizer state counts differ")
    for p, g in zip(arrays, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        if not np.isfinite(np.sum(g)):
            raise FloatingPointError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def adam_step(params: Mlp, grads: Gradients, state: AdamState, lr: float) -> tuple[Mlp, AdamState]:
    adam_update([params.theta], [grads.flat], state, lr)
    return params, state


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """Polyak blend ``target <- (1 - tau) * target + tau * source`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.layer_dims != source.layer_dims:
        raise ValueError("target and source shapes differ")
    target.theta *= 1.0 - tau
    target.theta += tau * source.theta
    return target


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten_into(arrays, flat) -> None:
    """Write a flat vector back into ``arrays`` (row-major)."""
    flat = np.asarray(flat, dtype=np.float64)
    i = 0
    for a in arrays:
        a[...] = flat[i:i + a.size].reshape(a.shape)
        i += a.size
    if i != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, expected {i}")

