"""Multi-index sets and chain-rule term tables for truncated jets."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

MAX_JET_ORDER = 3


def _set_partitions(items: list):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _positions(counts: tuple) -> list[int]:
    return [v for v, n in enumerate(counts) for _ in range(n)]


def _counts(positions: Iterable[int], nvars: int) -> tuple:
    c = [0] * nvars
    for v in positions:
        c[v] += 1
    return tuple(c)


@dataclass(frozen=True)
class CompositionTable:
    tgt: np.ndarray
    nfac: np.ndarray
    coef: np.ndarray
    fac: np.ndarray


class IndexSet:
    """Ordered, downward-closed set of multi-indices (count tuples).

    Entry 0 is always the zero multi-index.  The set is sorted by total
    order then lexicographically, so lower orders precede higher ones.
    """

    def __init__(self, indices: Iterable[Sequence[int]], nvars: int):
        self.nvars = nvars
        closed = {tuple([0] * nvars)}
        for idx in indices:
            idx = tuple(int(n) for n in idx)
            if len(idx) != nvars or min(idx, default=0) < 0:
                raise ValueError(f"bad multi-index {idx}")
            if sum(idx) > MAX_JET_ORDER:
                raise ValueError(f"jet order above {MAX_JET_ORDER}")
            closed.update(product(*(range(n + 1) for n in idx)))
        self.indices = sorted(closed, key=lambda c: (sum(c), tuple(-n for n in c)))
        self.ids = {c: i for i, c in enumerate(self.indices)}
        self.table = self._build_table()

    @classmethod
    def full(cls, nvars: int, order: int, directions: Iterable[int] | None = None) -> IndexSet:
        dirs = sorted(set(range(nvars) if directions is None else directions))
        if not dirs:
            raise ValueError("directions must be nonempty")
        idx = []
        for combo in product(range(order + 1), repeat=len(dirs)):
            if sum(combo) <= order:
                c = [0] * nvars
                for d, n in zip(dirs, combo):
                    c[d] = n
                idx.append(tuple(c))
        return cls(idx, nvars)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, c) -> bool:
        return tuple(c) in self.ids

    def __iter__(self):
        return iter(self.indices)

    @property
    def order(self) -> int:
        return max(sum(c) for c in self.indices)

    def _build_table(self) -> CompositionTable:
        terms: dict = {}
        for m, c in enumerate(self.indices):
            if m == 0:
                continue
            pos = _positions(c)
            for part in _set_partitions(list(range(len(pos)))):
                facs = tuple(sorted(self.ids[_counts((pos[i] for i in block), self.nvars)]
                                    for block in part))
                key = (m, len(facs), facs)
                terms[key] = terms.get(key, 0) + 1
        keys = sorted(terms)
        T = len(keys)
        tgt = np.array([k[0] for k in keys], dtype=np.int64)
        nfac = np.array([k[1] for k in keys], dtype=np.int64)
        coef = np.array([terms[k] for k in keys], dtype=np.float64)
        fac = np.zeros((T, MAX_JET_ORDER), dtype=np.int64)
        for t, k in enumerate(keys):
            fac[t, :len(k[2])] = k[2]
        return CompositionTable(tgt.reshape(T), nfac.reshape(T), coef.reshape(T), fac)

    def seed(self, points: np.ndarray) -> np.ndarray:
        """Jet of the coordinate map itself at ``points`` (N, nvars) -> (M, N, nvars)."""
        points = np.asarray(points, dtype=np.float64)
        J = np.zeros((len(self),) + points.shape)
        J[0] = points
        for v in range(self.nvars):
            unit = tuple(int(i == v) for i in range(self.nvars))
            if unit in self.ids:
                J[self.ids[unit], ..., v] = 1.0
        return J

    def label(self, c, names: Sequence[str]) -> str:
        return "".join(n * k for n, k in zip(names, c)) or "()"


def compose(A: np.ndarray, derivs: Sequence[np.ndarray], table: CompositionTable) -> np.ndarray:
    """Jet of ``f(a)`` for a jet ``A`` (M, ...) given ``derivs[n] = f^(n)(A[0])``."""
    from .kernels import compose_numpy
    shape = A.shape
    flat = A.reshape(shape[0], -1)
    S = np.stack([np.broadcast_to(d, shape[1:]).reshape(-1) for d in derivs])
    return compose_numpy(flat, S, table.tgt, table.nfac, table.coef, table.fac).reshape(shape)


def cos_jet(A: np.ndarray, table: CompositionTable) -> np.ndarray:
    c, s = np.cos(A[0]), np.sin(A[0])
    return compose(A, [c, -s, -c, s], table)


def sin_jet(A: np.ndarray, table: CompositionTable) -> np.ndarray:
    c, s = np.cos(A[0]), np.sin(A[0])
    return compose(A, [s, c, -s, -c], table)


def jet_mul(A: np.ndarray, B: np.ndarray, index_set: IndexSet) -> np.ndarray:
    """Leibniz product of two jets over the same index set."""
    from math import comb
    out = np.zeros(np.broadcast_shapes(A.shape, B.shape))
    for m, c in enumerate(index_set.indices):
        for beta in product(*(range(n + 1) for n in c)):
            w = 1
            for n, k in zip(c, beta):
                w *= comb(n, k)
            rest = tuple(n - k for n, k in zip(c, beta))
            out[m] += w * A[index_set.ids[beta]] * B[index_set.ids[rest]]
    return out
