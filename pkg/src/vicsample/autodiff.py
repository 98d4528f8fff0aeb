"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`GradTape` records every primitive applied to :class:`Tensor`
values in execution order. ``tape.backward(loss)`` walks that record in
reverse, so each node is visited exactly once.

The module-level functions (``relu``, ``sqrt``, ``take`` ...) accept plain
numpy arrays as well, which lets the loss code run with or without a tape.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class TapeError(RuntimeError):
    pass


class Tensor:
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, tape: "GradTape | None" = None, name: str | None = None):
        self.value = np.asarray(value)
        self.tape = tape
        self.name = name
        self.grad = None
        self._backward = None
        self._parents: tuple = ()

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


class GradTape:
    """Records primitive operations for a single forward/backward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.params: dict[str, Tensor] = {}

    def param(self, value, name: str) -> Tensor:
        """Register a leaf whose gradient is returned by :meth:`backward`."""
        if name in self.params:
            raise TapeError(f"parameter {name!r} registered twice")
        t = Tensor(value, self, name)
        self.params[name] = t
        return t

    def watch(self, value, name: str) -> Tensor:
        return self.param(value, name)

    def _record(self, value, parents, backward) -> Tensor:
        out = Tensor(value, self)
        out._parents = parents
        out._backward = backward
        self.nodes.append(out)
        return out

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` for every registered parameter."""
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise TapeError("loss was not computed on this tape")
        if not self.nodes:
            raise TapeError("backward called before any forward operation")
        if loss.value.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        for node in self.nodes:
            node.grad = None
        for p in self.params.values():
            p.grad = None
        loss.grad = np.ones_like(loss.value)
        # nodes are appended in execution order, which is a topological order
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not isinstance(parent, Tensor) or parent.tape is not self:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.value))
            for name, p in self.params.items()
        }


def _tape_of(*xs) -> GradTape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is not None and x.tape is not tape:
                raise TapeError("operands belong to different tapes")
            tape = x.tape
    return tape


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    out = _val(a) + _val(b)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(_val(a)), np.shape(_val(b))
    return tape._record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    tape = _tape_of(a)
    if tape is None:
        return -_val(a)
    return tape._record(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    va, vb = _val(a), _val(b)
    out = va * vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape._record(
        out, (a, b), lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb))
    )


def square(a):
    va = _val(a)
    tape = _tape_of(a)
    if tape is None:
        return va * va
    return tape._record(va * va, (a,), lambda g: (2.0 * g * va,))


def matmul(a, b):
    va, vb = _val(a), _val(b)
    out = va @ vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape._record(out, (a, b), lambda g: (g @ vb.T, va.T @ g))


def spmm(adj: sp.spmatrix, x):
    """Sparse constant matrix times a dense operand."""
    out = adj @ _val(x)
    tape = _tape_of(x)
    if tape is None:
        return out
    adj_t = adj.T.tocsr()
    return tape._record(out, (x,), lambda g: (adj_t @ g,))


def transpose(a):
    tape = _tape_of(a)
    if tape is None:
        return _val(a).T
    return tape._record(a.value.T, (a,), lambda g: (g.T,))


def relu(a):
    va = _val(a)
    out = np.maximum(va, 0)
    tape = _tape_of(a)
    if tape is None:
        return out
    mask = va > 0
    return tape._record(out, (a,), lambda g: (g * mask,))


def sqrt(a):
    va = _val(a)
    out = np.sqrt(va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape._record(out, (a,), lambda g: (g * 0.5 / out,))


def tsum(a, axis=None):
    va = _val(a)
    out = va.sum(axis=axis)
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = va.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return tape._record(np.asarray(out), (a,), back)


def mean(a, axis=None):
    va = _val(a)
    n = va.size if axis is None else va.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def take(a, indices, axis: int):
    """Select ``indices`` along ``axis``; ``None`` selects everything."""
    if indices is None:
        return a
    va = _val(a)
    indices = np.asarray(indices, dtype=np.int64)
    out = np.take(va, indices, axis=axis)
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = va.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        idx = [slice(None)] * len(shape)
        idx[axis] = indices
        np.add.at(full, tuple(idx), g)
        return (full,)

    return tape._record(out, (a,), back)


def diagonal(a):
    va = _val(a)
    out = np.diagonal(va).copy()
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape._record(out, (a,), lambda g: (np.diag(g),))


def value(x) -> np.ndarray:
    """Underlying array of a Tensor, or the argument itself."""
    return _val(x)
