"""Canonical polynomial expressions over field derivatives and parameters.

An :class:`Expression` is stored fully expanded: a sum of monomials, each a
float coefficient times a product of atoms raised to integer powers.  Atoms
are either named parameters or derivative terms ``(field, multi-index)``.
Because mixed partials share one multi-index and like monomials are merged
on construction, two expressions are mathematically equal polynomials iff
they compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

MultiIndex = tuple  # tuple[tuple[str, int], ...], sorted by variable name


def make_index(counts: Mapping[str, int] | Iterable[tuple[str, int]]) -> MultiIndex:
    items = counts.items() if isinstance(counts, Mapping) else counts
    merged: dict[str, int] = {}
    for var, n in items:
        if n < 0:
            raise ValueError(f"negative derivative count for {var!r}")
        if n:
            merged[var] = merged.get(var, 0) + n
    return tuple(sorted(merged.items()))


def index_order(index: MultiIndex) -> int:
    return sum(n for _, n in index)


def index_add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return make_index(list(a) + list(b))


def index_sub(a: MultiIndex, b: MultiIndex) -> MultiIndex | None:
    """``a - b`` if ``b <= a`` componentwise, else None."""
    da = dict(a)
    for var, n in b:
        if da.get(var, 0) < n:
            return None
        da[var] -= n
    return make_index(da)


@dataclass(frozen=True)
class Param:
    name: str

    def key(self):
        return (1, self.name, ())


@dataclass(frozen=True)
class Deriv:
    field: str
    index: MultiIndex = ()

    def key(self):
        return (0, self.field, self.index)

    @property
    def order(self) -> int:
        return index_order(self.index)


Atom = Param | Deriv
Monomial = tuple  # tuple[tuple[Atom, int], ...] sorted by atom key


def _monomial(factors: Mapping[Atom, int]) -> Monomial:
    return tuple(sorted(((a, p) for a, p in factors.items() if p != 0),
                        key=lambda ap: (ap[0].key(), ap[1])))


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    f = dict(a)
    for atom, p in b:
        f[atom] = f.get(atom, 0) + p
    return _monomial(f)


def _mono_sort_key(m: Monomial):
    deriv_order = sum(a.order * p for a, p in m if isinstance(a, Deriv))
    field_degree = sum(p for a, p in m if isinstance(a, Deriv))
    return (-deriv_order, -field_degree, tuple((a.key(), p) for a, p in m))


class Expression:
    """Immutable expanded polynomial; see module docstring."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        cleaned = {m: float(c) for m, c in (terms or {}).items() if c != 0.0}
        self._terms = tuple(sorted(cleaned.items(), key=lambda mc: _mono_sort_key(mc[0])))
        self._hash = None

    # construction -----------------------------------------------------
    @classmethod
    def const(cls, value: float) -> Expression:
        return cls({(): float(value)})

    @classmethod
    def param(cls, name: str) -> Expression:
        return cls({((Param(name), 1),): 1.0})

    @classmethod
    def deriv(cls, field: str, index=()) -> Expression:
        return cls({((Deriv(field, make_index(index)), 1),): 1.0})

    @classmethod
    def atom(cls, atom: Atom, power: int = 1) -> Expression:
        return cls({((atom, power),): 1.0})

    # inspection -------------------------------------------------------
    @property
    def terms(self) -> tuple:
        """Canonically ordered ``(monomial, coefficient)`` pairs."""
        return self._terms

    def as_dict(self) -> dict:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(m == () for m, _ in self._terms)

    def constant_value(self) -> float:
        if not self.is_constant():
            raise ValueError("expression is not constant")
        return self._terms[0][1] if self._terms else 0.0

    def atoms(self) -> set:
        return {a for m, _ in self._terms for a, _ in m}

    def derivs(self) -> set:
        return {a for a in self.atoms() if isinstance(a, Deriv)}

    def params(self) -> set:
        return {a.name for a in self.atoms() if isinstance(a, Param)}

    def fields(self) -> set:
        return {a.field for a in self.derivs()}

    # arithmetic -------------------------------------------------------
    def __add__(self, other) -> Expression:
        other = _lift(other)
        out = dict(self._terms)
        for m, c in other._terms:
            out[m] = out.get(m, 0.0) + c
        return Expression(out)

    __radd__ = __add__

    def __neg__(self) -> Expression:
        return Expression({m: -c for m, c in self._terms})

    def __sub__(self, other) -> Expression:
        return self + (-_lift(other))

    def __rsub__(self, other) -> Expression:
        return _lift(other) - self

    def __mul__(self, other) -> Expression:
        other = _lift(other)
        out: dict = {}
        for m1, c1 in self._terms:
            for m2, c2 in other._terms:
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Expression(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> Expression:
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Expression.const(1.0)
        for _ in range(n):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Expression.const(other)
        if not isinstance(other, Expression):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._terms)
        return self._hash

    def __repr__(self) -> str:
        from .parser import to_text
        return f"Expression({to_text(self)!r})"

    def __str__(self) -> str:
        from .parser import to_text
        return to_text(self)


def _lift(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, float)):
        return Expression.const(float(x))
    raise TypeError(f"cannot combine Expression with {type(x).__name__}")


def canonicalize(e: Expression) -> Expression:
    """Expressions are canonical by construction; kept as an explicit entry point."""
    return Expression(e.as_dict())


# calculus ------------------------------------------------------------------

def differentiate(e: Expression, var: str, depends: Mapping[str, Iterable[str]] | None = None) -> Expression:
    """Total derivative of ``e`` along ``var``.

    ``depends`` maps a field to the variables it depends on; fields missing
    from it (or all fields when it is None) depend on every variable.
    """
    out: dict = {}
    for mono, coeff in e.terms:
        for i, (atom, power) in enumerate(mono):
            if isinstance(atom, Param):
                continue
            if depends is not None and atom.field in depends and var not in depends[atom.field]:
                continue
            factors = dict(mono)
            factors[atom] = power - 1
            d_atom = Deriv(atom.field, index_add(atom.index, ((var, 1),)))
            factors[d_atom] = factors.get(d_atom, 0) + 1
            m = _monomial(factors)
            out[m] = out.get(m, 0.0) + coeff * power
    return Expression(out)


def differentiate_index(e: Expression, index: MultiIndex, depends=None) -> Expression:
    for var, n in index:
        for _ in range(n):
            e = differentiate(e, var, depends)
    return e


def bind(e: Expression, values: Mapping[str, float]) -> Expression:
    """Replace bound parameters with their numeric values."""
    out: dict = {}
    for mono, coeff in e.terms:
        factors = {}
        for atom, power in mono:
            if isinstance(atom, Param) and atom.name in values:
                coeff = coeff * float(values[atom.name]) ** power
            else:
                factors[atom] = power
        m = _monomial(factors)
        out[m] = out.get(m, 0.0) + coeff
    return Expression(out)


def required_orders(e: Expression) -> dict[str, set]:
    """Field -> multi-indices a jet must carry to evaluate ``e``.

    The zero multi-index (the field value) is always included for every
    field that occurs, since it anchors the jet.
    """
    orders: dict[str, set] = {}
    for atom in e.derivs():
        orders.setdefault(atom.field, {()}).add(atom.index)
    return orders


def time_order(mono: Monomial, var: str) -> int:
    return max((dict(a.index).get(var, 0) for a, _ in mono if isinstance(a, Deriv)), default=0)


def orient(e: Expression, var: str = "t") -> Expression:
    """Fix the sign of a residual so its leading ``var``-derivative term is positive.

    The leading term is the first monomial (canonical order) among those
    with the highest derivative order in ``var``.  Residuals are defined up
    to sign, so this only picks a presentation.
    """
    if e.is_zero():
        return e
    top = max(time_order(m, var) for m, _ in e.terms)
    for m, c in e.terms:
        if time_order(m, var) == top:
            return -e if c < 0 else e
    return e


# substitution ----------------------------------------------------------------

class NonlinearPatternError(ValueError):
    pass


def _pattern_atoms(pattern: Expression) -> list[tuple[Deriv, float]]:
    atoms = []
    for mono, coeff in pattern.terms:
        if len(mono) != 1 or mono[0][1] != 1 or not isinstance(mono[0][0], Deriv):
            raise NonlinearPatternError(
                f"substitution pattern must be a linear combination of derivative terms, got {pattern}")
        atoms.append((mono[0][0], coeff))
    if not atoms:
        raise NonlinearPatternError("empty substitution pattern")
    return atoms


def _shift(atom: Deriv, beta: MultiIndex) -> Deriv:
    return Deriv(atom.field, index_add(atom.index, beta))


def substitute(e: Expression, pattern: Expression, replacement: Expression,
               depends=None, rtol: float = 1e-12) -> Expression:
    """Replace every occurrence of a linear derivative pattern.

    Occurrences are found by collecting monomials of ``e`` over a common
    cofactor: a group ``lam * K * D^b(pattern)`` (for any derivative shift
    ``b`` of the pattern) is replaced by ``lam * K * D^b(replacement)``.
    Because the pattern is a definition or a constraint, its derivatives are
    rewritten too, e.g. ``v_x - u_y -> omega`` turns ``v_xxx - u_xxy`` into
    ``omega_xx``.
    """
    patt = _pattern_atoms(pattern)
    shifts = set()
    for mono, _ in e.terms:
        for atom, _ in mono:
            if not isinstance(atom, Deriv):
                continue
            for p_atom, _ in patt:
                if p_atom.field == atom.field:
                    beta = index_sub(atom.index, p_atom.index)
                    if beta is not None:
                        shifts.add(beta)
    current = e
    for beta in sorted(shifts, key=lambda b: (index_order(b), b)):
        shifted = [(_shift(a, beta), c) for a, c in patt]
        repl = differentiate_index(replacement, beta, depends)
        for _ in range(10_000):
            hit = _find_group(current, shifted, rtol)
            if hit is None:
                break
            lam, cofactor = hit
            terms = current.as_dict()
            for atom, _ in shifted:
                del terms[_mono_mul(cofactor, ((atom, 1),))]
            current = Expression(terms) + Expression({cofactor: lam}) * repl
        else:  # pragma: no cover
            raise RuntimeError("substitution did not terminate")
    return current


def _find_group(e: Expression, shifted, rtol):
    groups: dict = {}
    order: list = []
    for mono, coeff in e.terms:
        factors = dict(mono)
        for j, (atom, _) in enumerate(shifted):
            if factors.get(atom, 0) >= 1:
                rest = dict(factors)
                rest[atom] -= 1
                cof = _monomial(rest)
                if cof not in groups:
                    groups[cof] = {}
                    order.append(cof)
                groups[cof][j] = coeff
    for cof in order:
        ks = groups[cof]
        if len(ks) != len(shifted):
            continue
        lam = ks[0] / shifted[0][1]
        scale = max(abs(k) for k in ks.values())
        if all(abs(ks[j] - lam * c) <= rtol * scale for j, (_, c) in enumerate(shifted)):
            return lam, cof
    return None


def linear_combination(exprs: list[Expression], weights: list[Fraction]) -> Expression:
    """``sum(w_i * e_i)`` with coefficients combined in exact rational arithmetic."""
    acc: dict = {}
    for e, w in zip(exprs, weights):
        w = Fraction(w)
        if w == 0:
            continue
        for mono, coeff in e.terms:
            acc[mono] = acc.get(mono, Fraction(0)) + Fraction(repr(coeff)) * w
    return Expression({m: float(c) for m, c in acc.items() if c != 0})
