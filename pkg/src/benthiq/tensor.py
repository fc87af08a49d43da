"""Dense float32 tensors with reverse-mode automatic differentiation.

Define-by-run tape: each op records its parent tensors and a closure that
maps the gradient of its output onto gradients of its parents.  `backward`
walks the tape in reverse topological order, accumulates gradients
additively, and frees the graph.  Everything is float32; determinism under
a fixed seed is part of the contract, so nothing here spawns threads or
consults global RNG state.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ContractError, DimensionError

Array = np.ndarray

_ids = itertools.count()

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _f32(values) -> Array:
    arr = np.asarray(values, dtype=np.float32)
    return arr


class Tensor:
    """N-dimensional float32 array, optionally carrying a gradient buffer.

    `grad` matches `data` in shape whenever it exists.  `_parents` and
    `_backward` form the tape; they are cleared once `backward` has
    consumed them.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "uid")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[Array], Sequence[Array | None]] | None = None,
        op: str = "leaf",
    ):
        self.data = _f32(data)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents = _parents if requires_grad else ()
        self._backward = _backward if requires_grad else None
        self.op = op
        self.uid = next(_ids)

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> Array:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_const(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_const(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    # -- autodiff entry point -------------------------------------------

    def backward(self) -> None:
        backward(self)


def _const(values) -> Tensor:
    if isinstance(values, Tensor):
        return values
    return Tensor(values, op="const")


def _accumulate(t: Tensor, g: Array) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


_grad_enabled = [True]


class no_grad:
    """Context manager that stops ops from recording the tape."""

    def __enter__(self):
        self._prev = _grad_enabled[0]
        _grad_enabled[0] = False

    def __exit__(self, *exc):
        _grad_enabled[0] = self._prev
        return False


def _make(data: Array, parents: tuple[Tensor, ...], bwd, op: str) -> Tensor:
    req = _grad_enabled[0] and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents, _backward=bwd, op=op)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    out = a.data + b.data

    def bwd(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bwd, "add")


def sub(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    out = a.data - b.data

    def bwd(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bwd, "sub")


def mul(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g: Array):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _make(out, (a, b), bwd, "mul")


def div(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    out = a.data / b.data
    a_data, b_data = a.data, b.data

    def bwd(g: Array):
        ga = g / b_data
        gb = -g * a_data / (b_data * b_data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), bwd, "div")


# -- matmul and linear ----------------------------------------------------


def _swap_last(arr: Array) -> Array:
    return np.swapaxes(arr, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; dA = dY·Bᵀ and dB = Aᵀ·dY on the way back."""
    a, b = _const(a), _const(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul batch extents disagree: {a.shape} @ {b.shape}") from exc
    a_data, b_data = a.data, b.data

    def bwd(g: Array):
        ga = _unbroadcast(np.matmul(g, _swap_last(b_data)), a.shape)
        gb = _unbroadcast(np.matmul(_swap_last(a_data), g), b.shape)
        return ga, gb

    return _make(out, (a, b), bwd, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x[.., d_in] -> x@w (+ b)."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input extent {x.shape[-1]} != weight rows {w.shape[0]}")
    flat = x if x.ndim >= 2 else reshape(x, (1, x.shape[-1]))
    out = matmul(flat, w)
    if x.ndim < 2:
        out = reshape(out, (w.shape[1],))
    if b is not None:
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias shape {b.shape} != ({w.shape[1]},)")
        out = add(out, b)
    return out


# -- reductions -----------------------------------------------------------


def _axis_tuple(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _const(x)
    axes = _axis_tuple(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    shape = x.shape

    def bwd(g: Array):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (x,), bwd, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _const(x)
    axes = _axis_tuple(axis, x.ndim)
    count = int(np.prod([x.shape[ax] for ax in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)
    shape = x.shape

    def bwd(g: Array):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / np.float32(count), shape).copy(),)

    return _make(out, (x,), bwd, "mean")


# -- shape moves -----------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _const(x)
    shape = tuple(int(s) for s in shape)
    target = int(np.prod(shape)) if shape else 1
    if target != x.size and -1 not in shape:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    out = x.data.reshape(shape)
    old = x.shape

    def bwd(g: Array):
        return (g.reshape(old),)

    return _make(out, (x,), bwd, "reshape")


def permute(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = _const(x)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: {axes} is not an axis ordering for ndim {x.ndim}")
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g: Array):
        return (np.transpose(g, inverse),)

    return _make(out, (x,), bwd, "permute")


def roll(x: Tensor, shift: tuple[int, ...], axes: tuple[int, ...]) -> Tensor:
    """Toroidal roll along `axes`; inverse roll on the way back."""
    x = _const(x)
    out = np.roll(x.data, shift, axis=axes)
    inverse = tuple(-s for s in shift)

    def bwd(g: Array):
        return (np.roll(g, inverse, axis=axes),)

    return _make(out, (x,), bwd, "roll")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(_const(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g: Array):
        return tuple(np.split(g, splits, axis=ax))

    return _make(out, tensors, bwd, "concat")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    x = _const(x)
    ax = axis % x.ndim
    index = tuple(slice(None) if d != ax else slice(start, stop) for d in range(x.ndim))
    out = x.data[index].copy()
    shape = x.shape

    def bwd(g: Array):
        full = np.zeros(shape, dtype=np.float32)
        full[index] = g
        return (full,)

    return _make(out, (x,), bwd, "slice")


def gather_rows(table: Tensor, index: Array) -> Tensor:
    """table[index] for an integer index array; backward scatter-adds."""
    table = _const(table)
    index = np.asarray(index)
    out = table.data[index]
    shape = table.shape

    def bwd(g: Array):
        gt = np.zeros(shape, dtype=np.float32)
        np.add.at(gt, index, g)
        return (gt,)

    return _make(out, (table,), bwd, "gather")


# -- nonlinearities ---------------------------------------------------------


def softmax(x: Tensor, axis: int) -> Tensor:
    """Max-stabilized softmax along `axis`; rows sum to one."""
    x = _const(x)
    if not -x.ndim <= axis < x.ndim:
        raise IndexError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: Array):
        inner = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - inner),)

    return _make(p, (x,), bwd, "softmax")


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    x = _const(x)
    phi_cdf = ndtr(x.data).astype(np.float32, copy=False)
    out = x.data * phi_cdf
    x_data = x.data

    def bwd(g: Array):
        pdf = np.exp(-0.5 * x_data * x_data) * np.float32(_INV_SQRT_2PI)
        return (g * (phi_cdf + x_data * pdf),)

    return _make(out, (x,), bwd, "gelu")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance over the last axis, then affine."""
    x, gamma, beta = _const(x), _const(gamma), _const(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must be ({d},)"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data
    gamma_data = gamma.data

    def bwd(g: Array):
        reduce_axes = tuple(range(g.ndim - 1))
        dbeta = g.sum(axis=reduce_axes)
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dxhat = g * gamma_data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), bwd, "layer_norm")


# -- reverse-mode traversal --------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.uid not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate grads of every reachable requires_grad tensor, then free the tape."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward on a tensor that does not require grad")
    order = _topo_order(loss)
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad and g is not None:
                _accumulate(parent, g.astype(np.float32, copy=False))
        node._parents = ()
        node._backward = None


def first_nonfinite(loss: Tensor) -> str | None:
    """Name the earliest-created op whose output went non-finite, if any.

    Must run before `backward`, which frees the tape.
    """
    worst: tuple[int, str] | None = None
    seen: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.uid in seen:
            continue
        seen.add(node.uid)
        if not np.isfinite(node.data).all():
            if worst is None or node.uid < worst[0]:
                worst = (node.uid, node.op)
        stack.extend(node._parents)
    return None if worst is None else worst[1]


# -- seeded randomness --------------------------------------------------------


class Rng:
    """Seeded random stream; identical seed gives a bit-identical stream.

    `derive` folds extra integer key material into the seed so that
    per-epoch / per-item streams are independent of consumption order.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = _key
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, *_key))))

    def derive(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(k) for k in key))

    def normal(self, shape, std: float = 1.0) -> Array:
        return (self.gen.standard_normal(size=shape) * std).astype(np.float32)

    def uniform(self, low: float, high: float, shape=()) -> Array:
        return self.gen.uniform(low, high, size=shape).astype(np.float32)

    def integers(self, low: int, high: int, shape=()):
        return self.gen.integers(low, high, size=shape)

    def random(self) -> float:
        return float(self.gen.random())

    def permutation(self, n: int) -> Array:
        return self.gen.permutation(n)


def trunc_normal(rng: Rng, shape, std: float = 0.02, bound: float = 2.0) -> Array:
    """Normal(0, std) with draws beyond ±bound·std resampled."""
    out = rng.gen.normal(0.0, std, size=shape)
    limit = bound * std
    bad = np.abs(out) > limit
    while bad.any():
        out[bad] = rng.gen.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > limit
    return out.astype(np.float32)


# -- parameters and the optimizer ---------------------------------------------


class Parameter:
    """Trainable tensor plus its SGD momentum buffer.

    The name is the parameter's unique path in the model tree; it is
    assigned when the owning module binds names.
    """

    __slots__ = ("name", "tensor", "momentum")

    def __init__(self, values: Array, name: str = ""):
        self.name = name
        self.tensor = Tensor(values, requires_grad=True, op="param")
        self.momentum = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> Array:
        return self.tensor.data

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


def sgd_step(
    params: Iterable[Parameter],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
) -> None:
    """v <- momentum·v + (g + weight_decay·θ); θ <- θ − lr·v; grads zeroed."""
    for p in params:
        g = p.tensor.grad
        if g is None:
            raise ContractError(f"sgd_step: parameter '{p.name}' has no gradient")
        np.multiply(p.momentum, np.float32(momentum), out=p.momentum)
        p.momentum += g + np.float32(weight_decay) * p.tensor.data
        p.tensor.data -= np.float32(lr) * p.momentum
        g.fill(0.0)
