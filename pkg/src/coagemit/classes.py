"""Reaction classes: which sizes become reachable, and after how many reactions.

``S_0`` is the initial support.  ``S_k`` collects the sizes first producible
from a pair drawn in ``S_0 u ... u S_{k-1}`` where at least one member lies in
``S_{k-1}``.  Sizes above ``n_max`` are never tracked, not even as
intermediate reactants.

The level sets take the maximum over reactant levels, so ``s_n`` can be
smaller than the number of reactions a size needs.  ``collision_numbers``
counts reactions additively (``c_p = min c_a + c_b + 1``); that count is the
exponent of the small-time growth ``u_n ~ C t^c``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass


@dataclass(frozen=True)
class ReactionClassTable:
    ell: int
    support0: frozenset
    n_max: int
    s: dict                      # size -> reaction number
    classes: tuple               # S_0, S_1, ... as frozensets

    @property
    def attainable(self) -> frozenset:
        return frozenset(self.s)

    def as_json(self) -> dict:
        return {
            "ell": self.ell,
            "support0": sorted(self.support0),
            "n_max": self.n_max,
            "classes": [sorted(c) for c in self.classes],
            "reaction_numbers": {str(n): k for n, k in sorted(self.s.items())},
        }


def _bits(sizes) -> int:
    b = 0
    for n in sizes:
        b |= 1 << n
    return b


def _sizes(bits: int) -> list[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


def compute_classes(support0, ell: int, n_max: int) -> ReactionClassTable:
    """Level-set closure of the support under ``(a, b) -> a + b - ell``.

    Sets are Python-int bitsets: shifting the whole reached set by ``a - ell``
    gives every product with first reactant ``a`` in one operation.
    """
    support0 = frozenset(int(n) for n in support0)
    if not support0:
        raise ValueError("initial support must be nonempty")
    if min(support0) < 1:
        raise ValueError("sizes start at 1")
    if n_max < max(support0):
        raise ValueError("n_max must cover the initial support")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    window = (1 << (n_max + 1)) - 2          # sizes 1..n_max
    reached = _bits(support0)
    frontier = reached
    classes = [support0]
    while frontier:
        new = 0
        for a in _sizes(frontier):
            shift = a - ell
            prod = reached << shift if shift >= 0 else reached >> -shift
            new |= prod
        new &= window & ~reached
        if not new:
            break
        classes.append(frozenset(_sizes(new)))
        reached |= new
        frontier = new
    s = {n: k for k, c in enumerate(classes) for n in c}
    return ReactionClassTable(ell, support0, n_max, s, tuple(classes))


def reaction_number(table: ReactionClassTable, n: int) -> int | None:
    """``s_n`` if ``n`` is attainable within the table range, else None."""
    return table.s.get(n)


def collision_numbers(support0, ell: int, n_max: int) -> dict[int, int]:
    """Least number of reactions producing each attainable size ``<= n_max``.

    Generalized Dijkstra: sizes are settled in increasing count, and a
    settled size combines with every settled size (itself included).
    """
    support0 = sorted({int(n) for n in support0})
    if not support0 or support0[0] < 1 or n_max < support0[-1]:
        raise ValueError("support must be nonempty, positive and within n_max")
    best = {n: 0 for n in support0}
    heap = [(0, n) for n in support0]
    settled: dict[int, int] = {}
    while heap:
        c, a = heapq.heappop(heap)
        if a in settled:
            continue
        settled[a] = c
        for b, cb in settled.items():
            p = a + b - ell
            if 1 <= p <= n_max and p not in settled and c + cb + 1 < best.get(p, 1 << 62):
                best[p] = c + cb + 1
                heapq.heappush(heap, (c + cb + 1, p))
    return settled
