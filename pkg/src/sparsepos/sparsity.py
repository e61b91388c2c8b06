"""Variable-block structure: running intersection checks, ordering, extraction.

Blocks are sets of 1-based variable indices.  Block *positions* inside a
pattern are 0-based list indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .poly import Monomial, Polynomial

__all__ = [
    "SparsityPattern",
    "RipCheck",
    "AssignmentError",
    "check_rip",
    "find_rip_order",
    "assign_summands",
    "extract_blocks",
]

EXHAUSTIVE_LIMIT = 8


class AssignmentError(ValueError):
    """A summand's variables are not contained in any block."""

    def __init__(self, message: str, monomials: list[Monomial]):
        super().__init__(message)
        self.monomials = monomials


@dataclass(frozen=True)
class RipCheck:
    holds: bool
    # position i -> first earlier position k with I_i ∩ (I_0 ∪ … ∪ I_{i-1}) ⊆ I_k
    witnesses: dict[int, int] = field(default_factory=dict)
    violation: int | None = None

    def __bool__(self) -> bool:
        return self.holds


def _rip_scan(blocks: Sequence[frozenset[int]]) -> RipCheck:
    witnesses: dict[int, int] = {}
    seen: set[int] = set()
    for i, b in enumerate(blocks):
        if i:
            inter = b & seen
            k = next((k for k in range(i) if inter <= blocks[k]), None)
            if k is None:
                return RipCheck(False, witnesses, i)
            witnesses[i] = k
        seen |= b
    return RipCheck(True, witnesses)


@dataclass(frozen=True)
class SparsityPattern:
    """Ordered blocks ``I_1, …, I_r`` over variables ``1..nvars``."""

    blocks: tuple[frozenset[int], ...]
    nvars: int

    def __init__(self, blocks: Iterable[Iterable[int]], nvars: int):
        bl = tuple(frozenset(int(v) for v in b) for b in blocks)
        for b in bl:
            if not b:
                raise ValueError("blocks must be non-empty")
            if not all(1 <= v <= nvars for v in b):
                raise ValueError(f"block {sorted(b)} not inside 1..{nvars}")
        object.__setattr__(self, "blocks", bl)
        object.__setattr__(self, "nvars", int(nvars))

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def rip(self) -> RipCheck:
        return _rip_scan(self.blocks)

    @property
    def rip_holds(self) -> bool:
        return self.rip.holds

    def sorted_blocks(self) -> list[list[int]]:
        return [sorted(b) for b in self.blocks]

    def union(self, upto: int | None = None) -> frozenset[int]:
        bl = self.blocks if upto is None else self.blocks[:upto]
        return frozenset().union(*bl) if bl else frozenset()

    def reordered(self, order: Sequence[int]) -> "SparsityPattern":
        return SparsityPattern([self.blocks[i] for i in order], self.nvars)

    def to_json(self) -> dict:
        return {"blocks": self.sorted_blocks()}

    @classmethod
    def from_json(cls, data, nvars: int | None = None) -> "SparsityPattern":
        blocks = data["blocks"] if isinstance(data, dict) else data
        if nvars is None:
            nvars = max((max(b) for b in blocks if b), default=0)
        return cls(blocks, nvars)


def check_rip(pattern: SparsityPattern) -> RipCheck:
    """Check the running intersection property in the stored block order.

    For two or fewer blocks the property holds trivially; the witness for the
    second block is always the first.
    """
    return _rip_scan(pattern.blocks)


def _exhaustive_order(blocks: list[frozenset[int]]) -> list[int] | None:
    # Depth-first over prefixes; a failing prefix can never be completed.
    r = len(blocks)

    def extend(order: list[int], seen: frozenset[int]) -> list[int] | None:
        if len(order) == r:
            return order
        for i in range(r):
            if i in order:
                continue
            inter = blocks[i] & seen
            if order and not any(inter <= blocks[k] for k in order):
                continue
            got = extend(order + [i], seen | blocks[i])
            if got is not None:
                return got
        return None

    return extend([], frozenset())


def _greedy_order(blocks: list[frozenset[int]]) -> list[int] | None:
    r = len(blocks)
    starts = sorted(range(r), key=lambda i: -len(blocks[i]))
    for s in starts:
        order, seen = [s], set(blocks[s])
        rest = set(range(r)) - {s}
        while rest:
            valid = [i for i in rest if any((blocks[i] & seen) <= blocks[k] for k in order)]
            if not valid:
                break
            nxt = max(valid, key=lambda i: (len(blocks[i] & seen), -i))
            order.append(nxt)
            seen |= blocks[nxt]
            rest.discard(nxt)
        if not rest:
            return order
    return None


def find_rip_order(blocks: Sequence[Iterable[int]]) -> list[int] | None:
    """A permutation of block positions satisfying RIP, or ``None``.

    Exhaustive (backtracking) search up to eight blocks; above that a greedy
    maximum-overlap heuristic tried from every starting block, which may miss
    valid orders.
    """
    bl = [frozenset(b) for b in blocks]
    if len(bl) <= 2:
        return list(range(len(bl)))
    if _rip_scan(bl).holds:
        return list(range(len(bl)))
    if len(bl) <= EXHAUSTIVE_LIMIT:
        return _exhaustive_order(bl)
    return _greedy_order(bl)


def assign_summands(summands: Sequence[Polynomial], pattern: SparsityPattern) -> list[Polynomial]:
    """Sum each summand into the first block containing its variables."""
    out = [Polynomial.zero(pattern.nvars) for _ in pattern.blocks]
    for s in summands:
        if s.nvars != pattern.nvars:
            raise ValueError(f"summand has nvars={s.nvars}, pattern has {pattern.nvars}")
        support = s.support_vars()
        j = next((j for j, b in enumerate(pattern.blocks) if support <= b), None)
        if j is None:
            bad = [m for m, _ in s.items() if not any(m.vars <= b for b in pattern.blocks)]
            if not bad:
                # each monomial fits somewhere but the summand as a whole does not
                bad = [m for m, _ in s.items()]
            raise AssignmentError(
                f"summand with variables {sorted(support)} fits no block; offending monomials: {bad}", bad
            )
        out[j] = out[j] + s
    return out


def _csp_graph(f: Polynomial, constraints: Sequence[Polynomial]) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {}

    def clique(vs):
        for v in vs:
            adj.setdefault(v, set())
        for a, b in itertools.combinations(vs, 2):
            adj[a].add(b)
            adj[b].add(a)

    for m, _ in f.items():
        clique(sorted(m.vars))
    for g in constraints:
        clique(sorted(g.support_vars()))
    return adj


def extract_blocks(f: Polynomial, constraints: Sequence[Polynomial] = ()) -> SparsityPattern:
    """Maximal cliques of a chordal extension of the correlative sparsity graph.

    The extension comes from minimum-degree elimination; cliques are returned
    in reverse elimination order, which satisfies RIP.
    """
    adj = {v: set(n) for v, n in _csp_graph(f, constraints).items()}
    if not adj:
        return SparsityPattern([[1]] if f.nvars else [], f.nvars)
    work = {v: set(n) for v, n in adj.items()}
    cliques: list[frozenset[int]] = []
    while work:
        v = min(work, key=lambda u: (len(work[u]), u))
        nbrs = work.pop(v)
        c = frozenset(nbrs | {v})
        for a in nbrs:
            work[a].discard(v)
            work[a] |= nbrs - {a}
        if not any(c <= d for d in cliques):
            cliques.append(c)
    cliques.reverse()
    pattern = SparsityPattern(cliques, f.nvars)
    if not pattern.rip_holds:  # pragma: no cover - elimination cliques always satisfy RIP
        order = find_rip_order(cliques)
        pattern = pattern.reordered(order)
    return pattern
