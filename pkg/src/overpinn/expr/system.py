"""PDE systems, system files, auxiliary-equation derivation and elimination."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .core import (Deriv, Expression, Param, bind, differentiate, linear_combination,
                   orient, substitute)
from .parser import Context, ParseError, parse, to_text
from .rational import nullspace, primitive

SECTIONS = ("variables", "fields", "parameters", "definitions", "residuals", "constraints")


class SystemError_(ValueError):
    """Malformed system declaration."""


class NonlinearTargetError(ValueError):
    pass


@dataclass(frozen=True)
class PDESystem:
    variables: tuple[str, ...]
    fields: dict[str, tuple[str, ...]]
    residuals: tuple[Expression, ...]
    residual_names: tuple[str, ...] = ()
    parameters: dict[str, float] = field(default_factory=dict)
    constraints: tuple[Expression, ...] = ()
    constraint_names: tuple[str, ...] = ()
    definitions: dict[str, Expression] = field(default_factory=dict)

    def __post_init__(self):
        if not self.residual_names:
            object.__setattr__(self, "residual_names",
                               tuple(f"r{i}" for i in range(len(self.residuals))))
        if not self.constraint_names:
            object.__setattr__(self, "constraint_names",
                               tuple(f"c{i}" for i in range(len(self.constraints))))
        if len(self.residual_names) != len(self.residuals):
            raise SystemError_("residual names and residuals differ in length")
        self.validate()

    @property
    def context(self) -> Context:
        return Context(self.variables, self.fields, self.parameters.keys())

    def validate(self) -> None:
        exprs = list(self.residuals) + list(self.constraints) + list(self.definitions.values())
        for e in exprs:
            for f in e.fields():
                if f not in self.fields:
                    raise SystemError_(f"field {f!r} used but not declared")
            for p in e.params():
                if p not in self.parameters:
                    raise SystemError_(f"parameter {p!r} used but not declared")

    def parse(self, text: str) -> Expression:
        return parse(text, self.context)

    def residual(self, name: str) -> Expression:
        return self.residuals[self.residual_names.index(name)]

    def bound(self, e: Expression) -> Expression:
        return bind(e, self.parameters)

    def differentiate(self, e: Expression, var: str) -> Expression:
        if var not in self.variables:
            raise ValueError(f"undeclared variable {var!r}")
        return differentiate(e, var, self.fields)

    def with_residuals(self, residuals, names) -> PDESystem:
        return replace(self, residuals=tuple(residuals), residual_names=tuple(names))

    def to_text(self) -> str:
        out = ["[variables]", "names = " + ", ".join(self.variables), "", "[fields]"]
        defined = set(self.definitions)
        for f, vs in self.fields.items():
            if f not in defined:
                out.append(f"{f} = {', '.join(vs)}")
        out += ["", "[parameters]"]
        out += [f"{k} = {v!r}" for k, v in self.parameters.items()]
        if self.definitions:
            out += ["", "[definitions]"]
            out += [f"{k} = {to_text(v, self.variables)}" for k, v in self.definitions.items()]
        out += ["", "[residuals]"]
        out += [f"{n} = {to_text(e, self.variables)}" for n, e in zip(self.residual_names, self.residuals)]
        if self.constraints:
            out += ["", "[constraints]"]
            out += [f"{n} = {to_text(e, self.variables)}"
                    for n, e in zip(self.constraint_names, self.constraints)]
        return "\n".join(out) + "\n"


def _split_list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def loads(text: str) -> PDESystem:
    """Parse a system document (INI-style sections holding DSL strings)."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SystemError_(f"malformed system file: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise SystemError_(f"unknown sections {sorted(unknown)}")
    if not cp.has_section("variables") or "names" not in cp["variables"]:
        raise SystemError_("missing [variables] names")
    variables = _split_list(cp["variables"]["names"])
    fields = {}
    if cp.has_section("fields"):
        for k, v in cp["fields"].items():
            vs = _split_list(v) or variables
            bad = set(vs) - set(variables)
            if bad:
                raise SystemError_(f"field {k!r} depends on undeclared variables {sorted(bad)}")
            fields[k] = vs
    params = {}
    if cp.has_section("parameters"):
        for k, v in cp["parameters"].items():
            try:
                params[k] = float(v)
            except ValueError as exc:
                raise SystemError_(f"parameter {k!r} is not a number") from exc
    lines = text.splitlines()

    def parse_entry(name, key, value, ctx):
        # locate "key = value" inside [name] to report file positions
        line, col, current = 1, 1, None
        for i, raw in enumerate(lines, 1):
            stripped = raw.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1].strip()
            elif current == name and stripped.split("=", 1)[0].strip() == key:
                line, col = i, raw.index("=") + 2 + (len(raw.split("=", 1)[1]) - len(raw.split("=", 1)[1].lstrip()))
                break
        try:
            return parse(value.replace("\n", " "), ctx)
        except ParseError as exc:
            raise ParseError(f"[{name}] {key}: {str(exc).rsplit(' (line', 1)[0]}",
                             line, col + exc.column - 1) from exc

    definitions = {}
    if cp.has_section("definitions"):
        for k, v in cp["definitions"].items():
            definitions[k] = parse_entry("definitions", k, v, Context(variables, fields, params))
            fields[k] = variables
    ctx = Context(variables, fields, params)

    def section(name):
        if not cp.has_section(name):
            return (), ()
        names, exprs = [], []
        for k, v in cp[name].items():
            exprs.append(parse_entry(name, k, v, ctx))
            names.append(k)
        return tuple(exprs), tuple(names)

    residuals, rnames = section("residuals")
    constraints, cnames = section("constraints")
    return PDESystem(variables=variables, fields=fields, residuals=residuals, residual_names=rnames,
                     parameters=params, constraints=constraints, constraint_names=cnames,
                     definitions=definitions)


def load(path) -> PDESystem:
    return loads(Path(path).read_text())


# derivation ------------------------------------------------------------------

def derive_auxiliary(system: PDESystem, plan: Sequence[tuple[int, str]]) -> PDESystem:
    """Append ``D_var(residual[i])`` for each ``(i, var)`` in ``plan``."""
    residuals = list(system.residuals)
    names = list(system.residual_names)
    for i, var in plan:
        if not 0 <= i < len(system.residuals):
            raise IndexError(f"residual index {i} out of range")
        residuals.append(system.differentiate(system.residuals[i], var))
        names.append(f"{system.residual_names[i]}_d{var}")
    return system.with_residuals(residuals, names)


@dataclass(frozen=True)
class EliminationResult:
    alpha: tuple[Fraction, ...]
    directions: tuple[str | None, ...]
    residual: Expression


def coefficient_matrix(exprs: Sequence[Expression], targets: set[str]):
    """Rows: residuals; columns: (target derivative, parameter monomial)."""
    columns: list = []
    entries: dict = {}
    for i, e in enumerate(exprs):
        for mono, coeff in e.terms:
            hits = [(a, p) for a, p in mono if isinstance(a, Deriv) and a.field in targets]
            if not hits:
                continue
            others = [(a, p) for a, p in mono if not (isinstance(a, Deriv) and a.field in targets)]
            if len(hits) != 1 or hits[0][1] != 1 or any(not isinstance(a, Param) for a, _ in others):
                raise NonlinearTargetError(f"target appears nonlinearly in residual {i}")
            col = (hits[0][0], tuple(others))
            if col not in entries:
                entries[col] = {}
                columns.append(col)
            entries[col][i] = Fraction(repr(coeff))
    matrix = [[entries[c].get(i, Fraction(0)) for c in columns] for i in range(len(exprs))]
    return matrix, columns


def eliminate(system: PDESystem, targets: Sequence[str],
              directions: Sequence[str | None]) -> EliminationResult | None:
    """Cancel every derivative of ``targets`` by combining differentiated residuals.

    Each residual ``i`` is differentiated along ``directions[i]`` (None means
    no differentiation).  Returns None when no nontrivial combination exists.
    """
    if len(directions) != len(system.residuals):
        raise ValueError(f"{len(directions)} directions given for {len(system.residuals)} residuals")
    targets = set(targets)
    unknown = targets - set(system.fields)
    if unknown:
        raise ValueError(f"unknown target fields {sorted(unknown)}")
    diffed = [system.differentiate(r, d) if d else r for r, d in zip(system.residuals, directions)]
    matrix, columns = coefficient_matrix(diffed, targets)
    n = len(diffed)
    # alpha^T J = 0  <=>  J^T alpha = 0
    transposed = [[matrix[i][c] for i in range(n)] for c in range(len(columns))]
    basis = nullspace(transposed, ncols=n) if columns else [
        [Fraction(int(i == j)) for i in range(n)] for j in range(n)]
    if not basis:
        return None
    alpha = primitive(basis[0])
    combined = linear_combination(diffed, alpha)
    leftover = {a for a in combined.derivs() if a.field in targets}
    assert not leftover, f"elimination left target terms {leftover}"
    return EliminationResult(tuple(alpha), tuple(directions), combined)


def apply_constraints(system: PDESystem, e: Expression) -> Expression:
    """Substitute every side constraint by zero."""
    for c in system.constraints:
        e = substitute(e, c, Expression(), system.fields)
    return e


def apply_definitions(system: PDESystem, e: Expression) -> Expression:
    """Rewrite occurrences of each definition body (and its derivatives) as the defined field."""
    for name, body in system.definitions.items():
        e = substitute(e, body, Expression.deriv(name), system.fields)
    return e


def eliminate_and_reduce(system: PDESystem, targets, directions, time_var: str = "t"):
    """Elimination followed by constraint and definition substitution.

    For the incompressible momentum equations with pressure as target and
    directions ``(y, x)`` this produces the vorticity transport residual.
    """
    result = eliminate(system, targets, directions)
    if result is None:
        return None
    e = apply_constraints(system, result.residual)
    e = apply_definitions(system, e)
    if time_var in system.variables:
        e = orient(e, time_var)
    return replace(result, residual=e)
