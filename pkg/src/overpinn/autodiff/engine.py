"""Exact input jets of the network and parameter gradients of scalar losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tape
from .jets import IndexSet


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class Jet:
    """Partial derivatives of every network output at one base point.

    ``coefficients[m, k]`` is the derivative of output ``k`` for multi-index
    ``index_set.indices[m]`` (a tuple of per-input derivative counts).
    """

    point: np.ndarray
    index_set: IndexSet
    coefficients: np.ndarray

    def __getitem__(self, key) -> float:
        output, counts = key
        return float(self.coefficients[self.index_set.ids[tuple(counts)], output])

    def as_dict(self, output: int = 0) -> dict:
        return {c: float(self.coefficients[m, output]) for m, c in enumerate(self.index_set.indices)}


@dataclass
class GradientVector:
    value: float
    gradient: np.ndarray


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


def jet_eval(params, point, order: int, directions: Sequence[int] | None = None) -> Jet:
    """Exact partials of the network outputs at ``point`` up to total ``order`` (<= 3)."""
    from ..model import network_jet
    if order > 3:
        raise ValueError("jet order above 3")
    point = np.asarray(point, dtype=np.float64)
    iset = IndexSet.full(params.config.input_dim, order, directions)
    coeffs = tape.value(network_jet(params, point[None, :], iset))[:, 0, :]
    _check_finite(coeffs, "jet")
    return Jet(point, iset, coeffs)


def jet_batch(params, points, index_set: IndexSet) -> np.ndarray:
    """Jets at many points against one parameter snapshot: (M, N, n_out)."""
    from ..model import network_jet
    out = tape.value(network_jet(params, np.asarray(points, dtype=np.float64), index_set))
    _check_finite(out, "jet")
    return out


def loss_gradient(loss: Callable, params) -> GradientVector:
    """Value and flat gradient (``Parameters`` layout, zeros for the frozen embedding).

    ``loss`` receives a traced copy of ``params`` and must return a scalar
    built from tape operations.
    """
    traced = params.traced()
    out = loss(traced)
    if not isinstance(out, tape.Var):
        return GradientVector(float(out), np.zeros(params.config.parameter_count()))
    val = float(out.value)
    if not np.isfinite(val):
        raise NonFiniteError(f"non-finite loss {val}")
    tape.backward(out)
    grad = traced.gradient()
    _check_finite(grad, "gradient")
    return GradientVector(val, grad)


def input_gradient(params, point, output: int = 0) -> np.ndarray:
    """d output / d input by reverse mode through the plain forward pass."""
    from ..model import forward_traced
    x = tape.Var(np.asarray(point, dtype=np.float64)[None, :])
    y = forward_traced(params, x)
    tape.backward(tape.getitem(y, (0, output)))
    return x.grad[0]


# finite-difference oracle ----------------------------------------------------

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def fd_partial(f: Callable, point, counts: Sequence[int], step: float) -> np.ndarray:
    """Tensor-product central difference for one multi-index.

    Per-direction stencils: order 1 ``(f(x+h) - f(x-h)) / 2h``, order 2
    ``(f(x+h) - 2f(x) + f(x-h)) / h^2``, order 3
    ``(f(x+2h) - 2f(x+h) + 2f(x-h) - f(x-2h)) / 2h^3``; all O(h^2).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=np.float64)
    terms = [(np.zeros_like(point), 1.0)]
    for d, n in enumerate(counts):
        if n == 0:
            continue
        new = []
        for offset, w in terms:
            for k, c in _STENCILS[n]:
                o = offset.copy()
                o[d] += k * step
                new.append((o, w * c / step ** n))
        terms = new
    return sum(w * np.asarray(f(point + o), dtype=np.float64) for o, w in terms)


def finite_difference_partials(f: Callable, point, order: int, step: float,
                               directions: Sequence[int] | None = None) -> dict:
    """Central-difference estimates of all partials of ``f`` up to ``order``."""
    point = np.asarray(point, dtype=np.float64)
    iset = IndexSet.full(point.size, order, directions)
    out = {}
    for c in iset:
        out[c] = np.asarray(f(point), dtype=np.float64) if sum(c) == 0 else fd_partial(f, point, c, step)
    return out
