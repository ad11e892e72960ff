"""Numeric evaluation of symbolic residuals from network jets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autodiff import tape
from .autodiff.jets import IndexSet
from .expr import Deriv, Expression, Param, required_orders


class MissingCoefficientError(KeyError):
    pass


class UnboundSymbolError(KeyError):
    pass


@dataclass(frozen=True)
class ResidualEvaluator:
    """Postfix program over jet coefficients.

    Instructions: ``("const", c)``, ``("coef", field, counts)``,
    ``("pow", n)``, ``("mul",)``, ``("add",)``.
    """

    program: tuple
    variables: tuple[str, ...]
    bindings: Mapping[str, int]
    orders: Mapping[str, frozenset]

    def index_set(self) -> IndexSet:
        return IndexSet([c for cs in self.orders.values() for c in cs], len(self.variables))

    def run(self, lookup):
        stack = []
        cache = {}
        for ins in self.program:
            op = ins[0]
            if op == "const":
                stack.append(ins[1])
            elif op == "coef":
                key = (ins[1], ins[2])
                if key not in cache:
                    cache[key] = lookup(self.bindings[ins[1]], ins[2])
                stack.append(cache[key])
            elif op == "pow":
                stack.append(tape.power(stack.pop(), ins[1]) if isinstance(stack[-1], tape.Var)
                             else stack.pop() ** ins[1])
            elif op == "mul":
                b, a = stack.pop(), stack.pop()
                stack.append(_mul(a, b))
            elif op == "add":
                b, a = stack.pop(), stack.pop()
                stack.append(_add(a, b))
        return stack[0] if stack else 0.0


def _is_const(x) -> bool:
    return isinstance(x, float)


def _mul(a, b):
    if _is_const(a) and _is_const(b):
        return a * b
    if _is_const(a):
        return b if a == 1.0 else (-b if a == -1.0 else b * a)
    if _is_const(b):
        return a if b == 1.0 else (-a if b == -1.0 else a * b)
    return a * b


def _add(a, b):
    if _is_const(a) and a == 0.0:
        return b
    if _is_const(b) and b == 0.0:
        return a
    return a + b


def counts_of(atom: Deriv, variables: Sequence[str]) -> tuple:
    d = dict(atom.index)
    unknown = set(d) - set(variables)
    if unknown:
        raise ValueError(f"derivative along unknown variables {sorted(unknown)}")
    return tuple(d.get(v, 0) for v in variables)


def compile(e: Expression, bindings: Mapping[str, int], params: Mapping[str, float] | None = None,
            variables: Sequence[str] = ("t", "x")) -> ResidualEvaluator:  # noqa: A001
    """Compile ``e`` against field -> network output bindings and parameter values."""
    params = dict(params or {})
    variables = tuple(variables)
    program = []
    for k, (mono, coeff) in enumerate(e.terms):
        c = float(coeff)
        atoms = []
        for atom, p in mono:
            if isinstance(atom, Param):
                if atom.name not in params:
                    raise UnboundSymbolError(f"unbound parameter {atom.name!r}")
                c *= float(params[atom.name]) ** p
            else:
                if atom.field not in bindings:
                    raise UnboundSymbolError(f"unbound field {atom.field!r}")
                atoms.append((atom, p))
        program.append(("const", c))
        for atom, p in atoms:
            program.append(("coef", atom.field, counts_of(atom, variables)))
            if p > 1:
                program.append(("pow", p))
            program.append(("mul",))
        if k:
            program.append(("add",))
    orders = {f: frozenset(counts_of(Deriv(f, i), variables) for i in idx)
              for f, idx in required_orders(e).items()}
    return ResidualEvaluator(tuple(program), variables, dict(bindings), orders)


def union_index_set(evaluators: Sequence[ResidualEvaluator], extra=()) -> IndexSet:
    nvars = len(evaluators[0].variables)
    idx = [c for ev in evaluators for cs in ev.orders.values() for c in cs]
    return IndexSet(list(idx) + list(extra), nvars)


def evaluate(ev: ResidualEvaluator, jets) -> float:
    """Residual value at one point.

    ``jets`` is either an :class:`~overpinn.autodiff.Jet` of the network
    (outputs addressed through the evaluator's bindings) or a mapping
    ``field -> {counts: value}``.
    """
    if hasattr(jets, "coefficients"):
        def lookup(out, counts):
            if tuple(counts) not in jets.index_set.ids:
                raise MissingCoefficientError(f"jet lacks multi-index {counts}")
            return float(jets.coefficients[jets.index_set.ids[tuple(counts)], out])
    else:
        by_output = {ev.bindings[f]: coeffs for f, coeffs in jets.items() if f in ev.bindings}

        def lookup(out, counts):
            try:
                return float(by_output[out][tuple(counts)])
            except KeyError:
                raise MissingCoefficientError(f"missing coefficient {counts} for output {out}") from None
    return float(ev.run(lookup))


def evaluate_batch(ev: ResidualEvaluator, J, index_set: IndexSet, rows=slice(None)):
    """Residual over a batch from a jet array or tape Var of shape (M, N, n_out)."""
    def lookup(out, counts):
        if tuple(counts) not in index_set.ids:
            raise MissingCoefficientError(f"jet lacks multi-index {counts}")
        return tape.getitem(J, (index_set.ids[tuple(counts)], rows, out))
    return ev.run(lookup)


def residual_field(ev: ResidualEvaluator, params, points) -> np.ndarray:
    """Residual at each point (jet_eval + evaluate, batched)."""
    from .autodiff.engine import jet_batch
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.zeros(0)
    iset = ev.index_set()
    J = jet_batch(params, np.atleast_2d(points), iset)
    out = evaluate_batch(ev, J, iset)
    return np.broadcast_to(np.asarray(tape.value(out), dtype=np.float64), (len(np.atleast_2d(points)),)).copy()
