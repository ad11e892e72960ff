"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every :class:`Var` remembers its parents and a closure mapping the output
cotangent to parent cotangents.  :func:`backward` walks the graph in reverse
topological order.  Plain numpy arrays and floats mixing into an operation
are treated as constants.
"""
from __future__ import annotations

import numpy as np

from . import kernels


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Var) else -np.asarray(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, c):
        if isinstance(c, Var):
            raise TypeError("division by Var is not supported")
        return mul(self, 1.0 / np.asarray(c, dtype=np.float64))

    def __pow__(self, n):
        return power(self, n)

    def __getitem__(self, idx):
        return getitem(self, idx)


def value(x):
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _make(val, parents, fn):
    vars_ = tuple(p for p in parents if isinstance(p, Var))
    if not vars_:
        return val
    return Var(val, parents, fn)


def add(a, b):
    va, vb = value(a), value(b)
    out = va + vb
    sa, sb = np.shape(va), np.shape(vb)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    return _make(-value(a), (a,), lambda g: (-g,))


def mul(a, b):
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _make(va * vb, (a, b),
                 lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)))


def power(a, n: int):
    if not isinstance(n, int) or n < 0:
        raise ValueError("only non-negative integer powers")
    va = value(a)
    if n == 0:
        return np.ones_like(va)
    if n == 1:
        return a
    if n == 2:
        return mul(a, a)
    return _make(va ** n, (a,), lambda g: (g * n * va ** (n - 1),))


def square(a):
    return mul(a, a)


def sum_(a, axis=None):
    va = value(a)
    shape = va.shape

    def fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(va.sum(axis=axis), (a,), fn)


def mean(a):
    va = value(a)
    return sum_(a) * (1.0 / va.size)


def getitem(a, idx):
    va = value(a)

    def fn(g):
        full = np.zeros_like(va)
        np.add.at(full, idx, g)
        return (full,)

    return _make(va[idx], (a,), fn)


def concat(items, axis=-1):
    vals = [value(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _make(out, tuple(items), lambda g: tuple(np.split(g, bounds, axis=axis)))


def tanh(a):
    y = np.tanh(value(a))
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def cos(a):
    va = value(a)
    return _make(np.cos(va), (a,), lambda g: (-g * np.sin(va),))


def sin(a):
    va = value(a)
    return _make(np.sin(va), (a,), lambda g: (g * np.cos(va),))


def linear(x, W, b=None):
    """``x @ W.T + b`` with ``x`` of shape (..., in) and ``W`` (out, in)."""
    vx, vW = value(x), value(W)
    out = vx @ vW.T
    if b is not None:
        out = out + value(b)

    def fn(g):
        gx = g @ vW
        gW = g.reshape(-1, g.shape[-1]).T @ vx.reshape(-1, vx.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return (gx, gW, gb) if b is not None else (gx, gW)

    return _make(out, (x, W, b) if b is not None else (x, W), fn)


def jet_linear(H, W, b):
    """Affine map applied to a jet (M, N, in): the bias only enters row 0.

    Row 0 and the derivative rows use separate matmuls so that row 0 is
    computed exactly as in a plain forward pass.
    """
    vH, vW, vb = value(H), value(W), value(b)
    out = np.empty(vH.shape[:-1] + (vW.shape[0],))
    out[0] = vH[0] @ vW.T + vb
    if vH.shape[0] > 1:
        out[1:] = vH[1:] @ vW.T

    def fn(g):
        gH = g @ vW
        gW = g.reshape(-1, g.shape[-1]).T @ vH.reshape(-1, vH.shape[-1])
        gb = g[0].reshape(-1, g.shape[-1]).sum(axis=0)
        return gH, gW, gb

    return _make(out, (H, W, b), fn)


def tanh_jet(A, table):
    """tanh applied to a jet (M, ...) using the chain-rule term table."""
    vA = value(A)
    shape = vA.shape
    flat = np.ascontiguousarray(vA.reshape(shape[0], -1))
    Y, S = kernels.tanh_jet_forward(flat, table)

    def fn(g):
        gA = kernels.tanh_jet_backward(g.reshape(shape[0], -1), flat, S, table)
        return (gA.reshape(shape),)

    return _make(Y.reshape(shape), (A,), fn)


def backward(root: Var, seed=None) -> None:
    """Accumulate ``d root / d leaf`` into ``leaf.grad`` for every leaf."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if isinstance(p, Var) and id(p) not in seen:
                stack.append((p, False))
    grads = {id(root): np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if isinstance(p, Var):
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
