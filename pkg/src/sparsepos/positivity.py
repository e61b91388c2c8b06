"""Certified bounds for polynomials on boxes.

Bernstein coefficients are computed exactly: the box is mapped affinely onto
the unit cube, coefficients are scaled to a common integer denominator, and
midpoint subdivision runs an additions-only de Casteljau scheme on Python
integers.  Every bound returned here is a proof, not an estimate.

The uniform depth-``d`` Bernstein bound is the minimum coefficient over all
``2**(d*n)`` dyadic cells.  It is computed by best-first branch and bound:
a cell whose smallest coefficient is not below the best known corner value
(corner coefficients are exact polynomial values) cannot change that
minimum, so it is dropped.  The result equals the uniform bound exactly.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .poly import Box, DimensionError, Monomial, Polynomial, fraction_str, to_fraction

__all__ = [
    "PositivityReport",
    "GridMin",
    "bernstein_coefficients",
    "bernstein_lower_bound",
    "bernstein_upper_bound",
    "grid_min",
    "certify_positive",
    "lipschitz_bounds",
    "DEFAULT_DEPTH_CAP",
]

log = logging.getLogger(__name__)

DEFAULT_DEPTH_CAP = 10
MAX_CELLS = 200_000

POSITIVE, INCONCLUSIVE, DISPROVED = "positive", "inconclusive", "disproved"


@dataclass
class PositivityReport:
    lower_bound: Fraction
    witness_point: dict[int, Fraction]
    witness_value: Fraction
    method: str = "bernstein"
    subdivision_depth: int = 0
    verdict: str = POSITIVE
    margin: Fraction = Fraction(0)
    upper_bound: Fraction | None = None
    cells: int = 0

    @property
    def ok(self) -> bool:
        return self.verdict == POSITIVE

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "method": self.method,
            "depth": self.subdivision_depth,
            "margin": fraction_str(self.margin),
            "lower_bound": fraction_str(self.lower_bound),
            "witness_point": {str(v): fraction_str(x) for v, x in self.witness_point.items()},
            "witness_value": fraction_str(self.witness_value),
            "cells": self.cells,
        }
        if self.upper_bound is not None:
            out["upper_bound"] = fraction_str(self.upper_bound)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "PositivityReport":
        return cls(
            lower_bound=Fraction(d["lower_bound"]),
            witness_point={int(k): Fraction(v) for k, v in d.get("witness_point", {}).items()},
            witness_value=Fraction(d.get("witness_value", "0")),
            method=d.get("method", "bernstein"),
            subdivision_depth=int(d.get("depth", 0)),
            verdict=d.get("verdict", POSITIVE),
            margin=Fraction(d.get("margin", "0")),
            upper_bound=Fraction(d["upper_bound"]) if "upper_bound" in d else None,
            cells=int(d.get("cells", 0)),
        )


# ---------------------------------------------------------------------------
# exact Bernstein form


def _axis_matrix(d: int, lo: Fraction, w: Fraction) -> tuple[np.ndarray, int]:
    """Integer matrix ``M`` and denominator ``D`` with ``M / D`` mapping power
    coefficients in ``x`` to Bernstein coefficients on ``[lo, lo+w]``."""
    q = _lcm(lo.denominator, w.denominator)
    a, b = int(lo * q), int(w * q)
    binoms = [math.comb(d, j) for j in range(d + 1)]
    L = 1
    for c in binoms:
        L = _lcm(L, c)
    m = np.empty((d + 1, d + 1), dtype=object)
    for i in range(d + 1):
        for e in range(d + 1):
            s = 0
            for j in range(min(i, e) + 1):
                s += (L // binoms[j]) * math.comb(i, j) * math.comb(e, j) * a ** (e - j) * b**j
            m[i, e] = s * q ** (d - e)
    return m, L * q**d


def _integer_bernstein(p: Polynomial, box: Box) -> tuple[list[int], np.ndarray, int]:
    """Support variables, integer tensor ``T`` and denominator with ``T / denom``
    the Bernstein coefficients of ``p`` on ``box``."""
    vs = sorted(p.support_vars())
    for v in vs:
        if v not in box:
            raise DimensionError(f"box has no interval for X{v}")
    degs = [p.degree_in(v) for v in vs]
    denom = 1
    for _, c in p.items():
        denom = _lcm(denom, c.denominator)
    T = np.zeros([d + 1 for d in degs], dtype=object)
    for m, c in p.items():
        T[tuple(m.exp(v) for v in vs)] += c.numerator * (denom // c.denominator)
    for ax, (v, d) in enumerate(zip(vs, degs)):
        lo, hi = box[v]
        M, D = _axis_matrix(d, lo, hi - lo)
        T = np.moveaxis(np.tensordot(M, T, axes=([1], [ax])), 0, ax)
        denom *= D
    g = math.gcd(denom, *(int(x) for x in T.flat))
    if g > 1:
        T = T // g
        denom //= g
    return vs, T, denom


def bernstein_coefficients(p: Polynomial, box: Box) -> tuple[list[int], np.ndarray]:
    """Exact Bernstein coefficient tensor of ``p`` over ``box``.

    Returns the tensor axes (variables of ``p``'s support, sorted) and an
    object array of :class:`Fraction`.
    """
    vs, T, denom = _integer_bernstein(p, box)
    to_frac = np.frompyfunc(lambda c: Fraction(int(c), denom), 1, 1)
    return vs, np.asarray(to_frac(T), dtype=object).reshape(T.shape)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


class _Cell:
    __slots__ = ("T", "shift", "lo", "hi", "splits", "lb")

    def __init__(self, T, shift, lo, hi, splits, denom):
        self.T = T
        self.shift = shift
        self.lo = lo
        self.hi = hi
        self.splits = splits
        self.lb = Fraction(int(T.min()), denom << shift)


class _BernsteinTree:
    """Integer Bernstein tensors over dyadic sub-boxes of one root box.

    Cells are bisected one axis at a time, round-robin, so after
    ``d * naxes`` bisections a cell is one of the uniform depth-``d`` cells.
    """

    def __init__(self, p: Polynomial, box: Box):
        self.p = p
        self.box = box
        self.vars, T, self.denom = _integer_bernstein(p, box)
        self.degs = [n - 1 for n in T.shape]
        self.naxes = len(self.degs)
        lo, hi = [box[v][0] for v in self.vars], [box[v][1] for v in self.vars]
        self.root = _Cell(T, 0, lo, hi, 0, self.denom)
        self._corner_idx = list(itertools.product(*[(0, d) for d in self.degs]))

    def depth(self, cell: _Cell) -> int:
        return cell.splits // self.naxes

    def point(self, cell: _Cell, corner: Sequence[int]) -> dict[int, Fraction]:
        pt = self.box.center()
        for ax, v in enumerate(self.vars):
            pt[v] = cell.lo[ax] if corner[ax] == 0 else cell.hi[ax]
        return pt

    def corners(self, cell: _Cell):
        """Exact values of ``p`` at the cell's vertices, with corner indices."""
        den = self.denom << cell.shift
        for idx in self._corner_idx:
            yield Fraction(int(cell.T[idx]), den), idx

    @staticmethod
    def _split_axis(T: np.ndarray, axis: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        # c^r_i = c^{r-1}_i + c^{r-1}_{i+1} is 2**r times the de Casteljau value
        X = np.moveaxis(T, axis, 0)
        firsts = [X[0]]
        lasts = [X[d]]
        cur = X
        for _ in range(d):
            cur = cur[:-1] + cur[1:]
            firsts.append(cur[0])
            lasts.append(cur[-1])
        # fill object arrays directly: np.stack on 0-d slices would pick int64
        L = np.empty(X.shape, dtype=object)
        R = np.empty(X.shape, dtype=object)
        for j in range(d + 1):
            L[j] = firsts[j] * (1 << (d - j))
            R[j] = lasts[d - j] * (1 << j)
        return np.moveaxis(L, 0, axis), np.moveaxis(R, 0, axis)

    def next_axis(self, cell: _Cell, cap: int) -> int | None:
        """Round-robin axis for the next bisection, or ``None`` once the cell is at depth ``cap``."""
        if cell.splits >= cap * self.naxes:
            return None
        return cell.splits % self.naxes

    def children(self, cell: _Cell, ax: int | None = None) -> tuple[_Cell, _Cell]:
        if ax is None:
            ax = cell.splits % self.naxes
        d = self.degs[ax]
        mid = (cell.lo[ax] + cell.hi[ax]) / 2
        L, R = self._split_axis(cell.T, ax, d)
        shift = cell.shift + d
        left = _Cell(L, shift, cell.lo, cell.hi[:ax] + [mid] + cell.hi[ax + 1 :], cell.splits + 1, self.denom)
        right = _Cell(R, shift, cell.lo[:ax] + [mid] + cell.lo[ax + 1 :], cell.hi, cell.splits + 1, self.denom)
        return left, right


@functools.lru_cache(maxsize=8)
def _cached_tree(p: Polynomial, key: tuple) -> _BernsteinTree:
    return _BernsteinTree(p, Box({v: (lo, hi) for v, lo, hi in key}))


def _tree(p: Polynomial, box: Box) -> _BernsteinTree:
    # the same remainder is often bounded several times in a row
    key = tuple((v, *box[v]) for v in sorted(p.support_vars()) if v in box)
    return _cached_tree(p, key)


def _constant_value(p: Polynomial) -> Fraction:
    return p.coeff(Monomial())


def _sampled_minimum(p: Polynomial, box: Box, vs: Sequence[int], budget: int = 4096, keep: int = 4):
    """Exact value and point of the lowest of a few float-screened sample points."""
    k = len(vs)
    res = max(1, int(budget ** (1.0 / k)) - 1)
    axes = [_grid_axis(*box[v], res) for v in vs]
    pts = box.grid(res, vs)
    full = np.zeros((pts.shape[0], p.nvars))
    full[:, [v - 1 for v in vs]] = pts
    vals = p.eval_float(full)
    shape = [res + 1] * k
    best = None
    for flat in np.argsort(vals)[:keep]:
        idx = np.unravel_index(flat, shape)
        pt = box.center()
        x = [Fraction(0)] * p.nvars
        for ax, v in enumerate(vs):
            pt[v] = axes[ax][idx[ax]]
            x[v - 1] = pt[v]
        val = p.eval(x)
        if best is None or val < best[0]:
            best = (val, pt)
    return best


def bernstein_lower_bound(p: Polynomial, box: Box, depth: int = 0, max_cells: int = MAX_CELLS) -> Fraction:
    """Minimum Bernstein coefficient over the uniform dyadic subdivision of ``box``.

    Always a lower bound for ``min p`` on ``box``, nondecreasing in ``depth``.
    """
    return _lower_bound(p, box, depth, max_cells)[0]


def _lower_bound(p: Polynomial, box: Box, depth: int, max_cells: int = MAX_CELLS):
    # Any exact value of p is >= min p >= the depth-d bound, so it is a valid
    # pruning threshold; the returned minimum is still the uniform bound.
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if p.is_constant():
        c = _constant_value(p)
        return c, box.center(), 0
    tree = _tree(p, box)
    root = tree.root
    best_val, best_pt = _sampled_minimum(p, box, tree.vars)
    for val, idx in tree.corners(root):
        if val < best_val:
            best_val, best_pt = val, tree.point(root, idx)
    leaf_splits = depth * tree.naxes
    result = None
    stack = [root]
    explored = 0
    while stack:
        cell = stack.pop()
        thr = best_val if result is None else min(best_val, result)
        if cell.lb >= thr:
            continue
        if cell.splits >= leaf_splits:
            result = cell.lb if result is None else min(result, cell.lb)
            continue
        explored += 1
        if explored > max_cells:
            log.warning("bernstein_lower_bound: cell budget exhausted, returning a coarser bound")
            floor = min([cell.lb] + [c.lb for c in stack])
            result = floor if result is None else min(result, floor)
            break
        kids = tree.children(cell)
        for ch in kids:
            for val, idx in tree.corners(ch):
                if val < best_val:
                    best_val, best_pt = val, tree.point(ch, idx)
        stack.extend(sorted(kids, key=lambda c: c.lb, reverse=True))
    bound = best_val if result is None else min(result, best_val)
    return bound, {**box.center(), **best_pt}, explored


def bernstein_upper_bound(p: Polynomial, box: Box, depth: int = 0) -> Fraction:
    """Maximum Bernstein coefficient over the uniform subdivision; ``>= max p``."""
    return -bernstein_lower_bound(-p, box, depth)


# ---------------------------------------------------------------------------
# grid minimum with a Lipschitz correction


def lipschitz_bounds(p: Polynomial, box: Box, depth: int = 2) -> dict[int, Fraction]:
    """Certified bounds on ``|dp/dX_v|`` over ``box`` for each support variable."""
    out = {}
    for v in sorted(p.support_vars()):
        dp = p.diff(v)
        lo = bernstein_lower_bound(dp, box, depth)
        hi = bernstein_upper_bound(dp, box, depth)
        out[v] = max(abs(lo), abs(hi))
    return out


@dataclass
class GridMin:
    approx_min: Fraction
    certified_lower: Fraction
    argmin: dict[int, Fraction]
    lipschitz: Fraction


def _grid_axis(lo: Fraction, hi: Fraction, resolution: int) -> list[Fraction]:
    return [lo + (hi - lo) * Fraction(i, resolution) for i in range(resolution + 1)]


def grid_min(p: Polynomial, box: Box, resolution: int) -> GridMin:
    """Minimum of ``p`` over a uniform grid, plus a certified lower bound.

    Grid values are screened in floating point; candidates within the float
    error of the screened minimum are re-evaluated exactly, so ``approx_min``
    is the exact grid minimum.  ``certified_lower = approx_min - sum_v L_v h_v``
    where ``h_v`` is half the cell width along ``v``.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    vs = sorted(p.support_vars())
    for v in vs:
        if v not in box:
            raise DimensionError(f"box has no interval for X{v}")
    center = box.center()
    if not vs:
        c = _constant_value(p)
        return GridMin(c, c, center, Fraction(0))
    axes = [_grid_axis(*box[v], resolution) for v in vs]
    pts = box.grid(resolution, vs)
    full = np.zeros((pts.shape[0], p.nvars))
    full[:, [v - 1 for v in vs]] = pts
    vals = p.eval_float(full)
    radius = {v: max(1.0, abs(float(box[v][0])), abs(float(box[v][1]))) for v in vs}
    scale = sum(abs(float(c)) * math.prod(radius[v] ** e for v, e in m) for m, c in p.items())
    tol = 64 * np.finfo(float).eps * max(1.0, scale) * (p.degree + len(p) + 1)
    cand = np.flatnonzero(vals <= vals.min() + tol)
    shape = [resolution + 1] * len(vs)
    best, best_pt = None, None
    for flat in cand:
        idx = np.unravel_index(flat, shape)
        pt = dict(center)
        x = [Fraction(0)] * p.nvars
        for ax, v in enumerate(vs):
            pt[v] = axes[ax][idx[ax]]
            x[v - 1] = pt[v]
        val = p.eval(x)
        if best is None or val < best:
            best, best_pt = val, pt
    L = lipschitz_bounds(p, box)
    slack = sum(L[v] * (box[v][1] - box[v][0]) / (2 * resolution) for v in vs)
    return GridMin(best, best - slack, best_pt, sum(L.values(), Fraction(0)))


# ---------------------------------------------------------------------------
# certification


def certify_positive(
    p: Polynomial,
    box: Box,
    margin=0,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    with_upper: bool = False,
    max_cells: int = MAX_CELLS,
) -> PositivityReport:
    """Try to prove ``p >= margin`` (and ``p > 0``) everywhere on ``box``.

    A float-screened sample is checked exactly first, so most non-positive
    inputs are disproved without subdivision.  Cells are then refined
    depth-first, worst bound first, halving one axis at a time in turn.  A
    cell is settled once its smallest Bernstein coefficient clears the
    margin, and any vertex value violating the margin is a disproof.
    Refinement stops at ``depth_cap`` dyadic levels or after ``max_cells``
    cells, leaving the verdict inconclusive.
    """
    margin = to_fraction(margin)
    if margin < 0:
        raise ValueError("margin must be >= 0")

    def good(x: Fraction) -> bool:
        return x >= margin and x > 0

    upper = bernstein_upper_bound(p, box, 2) if with_upper else None
    if p.is_constant():
        c = _constant_value(p)
        return PositivityReport(c, box.center(), c, "bernstein", 0, POSITIVE if good(c) else DISPROVED, margin, upper)
    tree = _tree(p, box)
    root = tree.root
    wval, wpt = _sampled_minimum(p, box, tree.vars)

    def scan(cell):
        nonlocal wval, wpt
        for val, idx in tree.corners(cell):
            if val < wval:
                wval, wpt = val, tree.point(cell, idx)

    scan(root)
    if not good(wval):
        return PositivityReport(min(root.lb, wval), {**box.center(), **wpt}, wval, "bernstein", 0, DISPROVED, margin, upper, 1)
    settled_min = None
    stack = [root]
    reached = 0
    cells = 1
    verdict = POSITIVE
    while stack:
        cell = stack.pop()
        reached = max(reached, cell.splits)
        if good(cell.lb):
            settled_min = cell.lb if settled_min is None else min(settled_min, cell.lb)
            continue
        ax = tree.next_axis(cell, depth_cap) if cells < max_cells else None
        if ax is None:
            verdict = INCONCLUSIVE
            stack.append(cell)
            break
        kids = tree.children(cell, ax)
        cells += 2
        for ch in kids:
            scan(ch)
        if not good(wval):
            verdict = DISPROVED
            stack.extend(kids)
            break
        stack.extend(sorted(kids, key=lambda c: c.lb, reverse=True))
    bounds = [c.lb for c in stack] + ([settled_min] if settled_min is not None else [])
    lower = min(bounds + [wval])
    depth = -(-reached // tree.naxes)
    return PositivityReport(lower, {**box.center(), **wpt}, wval, "bernstein", depth, verdict, margin, upper, cells)
