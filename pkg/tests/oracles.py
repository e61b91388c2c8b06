"""Independent reference computations used as test oracles."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def rip_by_definition(blocks) -> bool:
    """For each i >= 2: I_i ∩ (I_1 ∪ … ∪ I_{i-1}) lies in some earlier I_k."""
    for i in range(1, len(blocks)):
        before = set().union(*blocks[:i])
        inter = set(blocks[i]) & before
        if not any(inter <= set(blocks[k]) for k in range(i)):
            return False
    return True


def rip_order_exists(blocks) -> bool:
    return any(rip_by_definition([blocks[i] for i in perm]) for perm in itertools.permutations(range(len(blocks))))


def sampled_min(p, box, per_axis: int) -> float:
    """Minimum of ``p`` over a uniform tensor grid with ``per_axis`` points per support variable."""
    vs = sorted(p.support_vars())
    if not vs:
        return float(p.eval([0] * p.nvars))
    axes = [np.linspace(float(box[v][0]), float(box[v][1]), per_axis) for v in vs]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.zeros((mesh[0].size, p.nvars))
    for v, m in zip(vs, mesh):
        pts[:, v - 1] = m.ravel()
    return float(p.eval_float(pts).min())


def univariate_min(coeffs: dict[int, Fraction], lo: float, hi: float) -> float:
    """Minimum of a univariate polynomial on [lo, hi] from critical points."""
    deg = max(coeffs, default=0)
    c = np.array([float(coeffs.get(e, 0)) for e in range(deg + 1)])
    poly = np.polynomial.Polynomial(c)
    crit = [r.real for r in poly.deriv().roots() if abs(r.imag) < 1e-12 and lo <= r.real <= hi] if deg > 1 else []
    return float(min(poly(x) for x in [lo, hi, *crit]))
