"""Recursive-descent parser and printer for the residual DSL.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' INT)*
    atom   := NUMBER | PARAM | FIELD | DOP '(' expr ')' | '(' expr ')'

``DOP`` is ``d`` followed by declared variable names, e.g. ``dtx``.  Division
is only allowed by numbers or parameter monomials.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import Deriv, Expression, Param, differentiate, make_index

MAX_ORDER = 4

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass
class Context:
    """Declared symbols available to the parser."""

    variables: tuple[str, ...]
    fields: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    parameters: Iterable[str] = ()

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.fields = {f: tuple(v) if v else self.variables for f, v in dict(self.fields).items()}
        self.parameters = set(self.parameters)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), line, pos + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, len(text) + 1))
    return toks


def _split_vars(name: str, variables: tuple[str, ...]) -> list[str] | None:
    if not name:
        return []
    for v in sorted(variables, key=len, reverse=True):
        if name.startswith(v):
            rest = _split_vars(name[len(v):], variables)
            if rest is not None:
                return [v] + rest
    return None


class _Parser:
    def __init__(self, text: str, ctx: Context, line: int):
        self.toks = _tokenize(text, line)
        self.i = 0
        self.ctx = ctx

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return tok

    def parse(self) -> Expression:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            if op.text == "*":
                e = e * rhs
            else:
                e = e * _invert(rhs, op)
        return e

    def unary(self) -> Expression:
        if self.peek().text in ("+", "-"):
            sign = self.take().text
            inner = self.unary()
            return -inner if sign == "-" else inner
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        while self.peek().text == "^":
            self.take()
            tok = self.take()
            if tok.kind != "num" or not tok.text.isdigit() or int(tok.text) < 1:
                raise ParseError("exponent must be a positive integer", tok.line, tok.col)
            base = base ** int(tok.text)
        return base

    def atom(self) -> Expression:
        tok = self.take()
        if tok.kind == "num":
            return Expression.const(float(tok.text))
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "id":
            name = tok.text
            followed_by_paren = self.peek().text == "("
            if name in self.ctx.fields and not followed_by_paren:
                return Expression.deriv(name)
            if name in self.ctx.parameters and not followed_by_paren:
                return Expression.param(name)
            if name.startswith("d") and followed_by_paren:
                dvars = _split_vars(name[1:], self.ctx.variables)
                if dvars:
                    self.take()
                    inner = self.expr()
                    self.expect(")")
                    for v in dvars:
                        inner = differentiate(inner, v, self.ctx.fields)
                    for atom in inner.derivs():
                        if atom.order > MAX_ORDER:
                            raise ParseError(f"derivative order above {MAX_ORDER}", tok.line, tok.col)
                    return inner
                raise ParseError(f"undeclared variable in derivative operator {name!r}", tok.line, tok.col)
            raise ParseError(f"undeclared symbol {name!r}", tok.line, tok.col)
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.line, tok.col)


def _invert(e: Expression, tok: _Tok) -> Expression:
    if len(e.terms) != 1 or any(not isinstance(a, Param) for a in e.atoms()):
        raise ParseError("division only by numbers or parameters", tok.line, tok.col)
    mono, coeff = e.terms[0]
    if coeff == 0:
        raise ParseError("division by zero", tok.line, tok.col)
    return Expression({tuple((a, -p) for a, p in mono): 1.0 / coeff})


def parse(text: str, context: Context, line: int = 1) -> Expression:
    """Parse DSL ``text`` into a canonical :class:`Expression`."""
    return _Parser(text, context, line).parse()


# printing ------------------------------------------------------------------

def _fmt_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _fmt_atom(atom, variables) -> str:
    if isinstance(atom, Param):
        return atom.name
    if not atom.index:
        return atom.field
    counts = dict(atom.index)
    order = list(variables) + sorted(v for v in counts if v not in variables)
    return "d" + "".join(v * counts[v] for v in order if v in counts) + f"({atom.field})"


def _fmt_power(atom, p, variables) -> str:
    s = _fmt_atom(atom, variables)
    return s if p == 1 else f"{s}^{p}"


def _print_key(mono, lead):
    derivs = [(a, p) for a, p in mono if isinstance(a, Deriv)]
    lead_order = max((dict(a.index).get(lead, 0) for a, _ in derivs), default=0)
    top = max((a.order for a, _ in derivs), default=0)
    degree = sum(p for _, p in derivs)
    return (-lead_order, -top, -degree, tuple((a.key(), p) for a, p in mono))


def _atom_print_key(ap):
    atom, p = ap
    if isinstance(atom, Param):
        return (0, 0, atom.name, ())
    return (1, atom.order, atom.field, atom.index)


def to_text(e: Expression, variables: Iterable[str] = ()) -> str:
    """Print ``e`` so that ``parse(to_text(e)) == e``."""
    variables = tuple(variables) or tuple(sorted({v for a in e.derivs() for v, _ in a.index}))
    if e.is_zero():
        return "0"
    lead = variables[0] if variables else None
    parts = []
    for k, (mono, coeff) in enumerate(sorted(e.terms, key=lambda mc: _print_key(mc[0], lead))):
        mono = sorted(mono, key=_atom_print_key)
        num = [_fmt_power(a, p, variables) for a, p in mono if p > 0]
        den = [_fmt_power(a, -p, variables) for a, p in mono if p < 0]
        mag = abs(coeff)
        if num:
            body = "*".join(num) if mag == 1.0 else _fmt_number(mag) + "*" + "*".join(num)
        else:
            body = _fmt_number(mag)
        if den:
            body += "".join("/" + d for d in den)
        if k == 0:
            parts.append("-" + body if coeff < 0 else body)
        else:
            parts.append(("- " if coeff < 0 else "+ ") + body)
    return " ".join(parts)


def field_term(name: str, **counts: int) -> Expression:
    return Expression.atom(Deriv(name, make_index(counts)))
