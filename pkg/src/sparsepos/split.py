"""Splitting a positive block-sparse sum into positive block pieces.

Given ``f = f_1 + ... + f_r`` with ``f_j`` in the variables of block ``I_j``
and ``f >= eps > 0`` on a box, produce ``h_j`` in the same variables with
``sum h_j == f`` exactly and each ``h_j`` certified positive on its block
sub-box.  Two blocks are handled by moving a transfer polynomial ``p`` in
the shared variables from one side to the other; ``p`` approximates the
partial minimum of the first summand over its private variables, shifted
down by ``eps/2``.  More blocks peel off the last block and recurse.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import minimize

from .poly import Box, Polynomial, fraction_str, rationalize, to_fraction
from .positivity import (
    DEFAULT_DEPTH_CAP,
    PositivityReport,
    certify_positive,
)
from .sparsity import SparsityPattern, check_rip

__all__ = [
    "SplitConfig",
    "SplitResult",
    "Transfer",
    "TwoSplit",
    "Envelope",
    "SplitError",
    "ApproximationError",
    "lower_envelope",
    "approx_poly",
    "split_two",
    "split_many",
    "positive_lower_bound",
]

log = logging.getLogger(__name__)

INNER_POINT_BUDGET = 20_000


class SplitError(RuntimeError):
    """Positivity of a split piece could not be certified."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ApproximationError(RuntimeError):
    def __init__(self, message: str, best_deviation: float, best: Polynomial | None):
        super().__init__(message)
        self.best_deviation = best_deviation
        self.best = best


@dataclass
class SplitConfig:
    epsilon: Fraction = Fraction(0)
    approx_degree_schedule: tuple[int, ...] = (0, 1, 2, 3, 4, 6, 8)
    envelope_grid_resolution: int = 16
    approx_check_resolution: int = 24
    depth_cap: int = DEFAULT_DEPTH_CAP
    eps_fraction: Fraction = Fraction(1, 2)
    polish: bool = True
    strict_common_interval: bool = False

    def __post_init__(self):
        self.epsilon = to_fraction(self.epsilon)
        self.eps_fraction = to_fraction(self.eps_fraction)
        if not 0 < self.eps_fraction < 1:
            raise ValueError("eps_fraction must lie in (0, 1)")
        self.approx_degree_schedule = tuple(int(d) for d in self.approx_degree_schedule)
        if not self.approx_degree_schedule:
            raise ValueError("degree schedule must be non-empty")
        if list(self.approx_degree_schedule) != sorted(set(self.approx_degree_schedule)):
            raise ValueError("degree schedule must be strictly increasing")
        if self.envelope_grid_resolution < 2 or self.approx_check_resolution < 2:
            raise ValueError("resolutions must be >= 2")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class Transfer:
    """``p`` was subtracted from block ``source`` and added to block ``target``."""

    p: Polynomial
    source: int
    target: int

    def to_json(self) -> dict:
        return {"p": self.p.to_json(), "source": self.source + 1, "target": self.target + 1}


@dataclass
class TwoSplit:
    h1: Polynomial
    h2: Polynomial
    p: Polynomial
    report1: PositivityReport
    report2: PositivityReport
    degree: int
    deviation: float


@dataclass
class SplitResult:
    h: list[Polynomial]
    transfers: list[Transfer]
    margins: list[PositivityReport]
    epsilon: Fraction = Fraction(0)
    pattern: SparsityPattern | None = None

    @property
    def ok(self) -> bool:
        return all(m.ok for m in self.margins)

    def to_json(self) -> dict:
        return {
            "epsilon": fraction_str(self.epsilon),
            "blocks": self.pattern.sorted_blocks() if self.pattern else None,
            "h": [h.to_json() for h in self.h],
            "transfers": [t.to_json() for t in self.transfers],
            "margins": [m.to_json() for m in self.margins],
        }


# ---------------------------------------------------------------------------
# envelope


def _float_box(box: Box, vs: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    return (np.array([float(box[v][0]) for v in vs]), np.array([float(box[v][1]) for v in vs]))


@dataclass
class Envelope:
    """``y -> min_x f1(x, y) - eps/2`` over the private variables ``x``.

    ``points``/``values`` hold the samples on the uniform overlap grid; calling
    the object evaluates at other overlap points.
    """

    f1: Polynomial
    inner: tuple[int, ...]
    overlap: tuple[int, ...]
    box: Box
    eps: Fraction
    resolution: int
    polish: bool = True
    points: np.ndarray = field(default=None, repr=False)
    values: np.ndarray = field(default=None, repr=False)
    argmins: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        k = len(self.inner)
        self._inner_res = self.resolution
        if k:
            self._inner_res = max(2, min(self.resolution, int(INNER_POINT_BUDGET ** (1.0 / k))))
        self._inner_grid = self.box.grid(self._inner_res, self.inner)
        self._grads = [self.f1.diff(v) for v in self.inner] if self.polish else []
        if self.points is None:
            self.points = self.box.grid(self.resolution, self.overlap) if self.overlap else np.zeros((1, 0))
            self.values, self.argmins = self._evaluate(self.points)

    def _full(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        pts = np.zeros((X.shape[0], self.f1.nvars))
        if self.inner:
            pts[:, [v - 1 for v in self.inner]] = X
        if self.overlap:
            pts[:, [v - 1 for v in self.overlap]] = Y
        return pts

    def _evaluate(self, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Y = np.asarray(Y, dtype=float)
        if Y.ndim < 2:
            Y = Y.reshape(-1, len(self.overlap)) if self.overlap else np.zeros((1, 0))
        half = float(self.eps) / 2
        if not self.inner:
            return self.f1.eval_float(self._full(np.zeros((Y.shape[0], 0)), Y)) - half, np.zeros((Y.shape[0], 0))
        G = self._inner_grid
        vals = np.empty(Y.shape[0])
        args = np.empty((Y.shape[0], len(self.inner)))
        chunk = max(1, 400_000 // G.shape[0])
        for s in range(0, Y.shape[0], chunk):
            Yc = Y[s : s + chunk]
            X = np.tile(G, (Yc.shape[0], 1))
            Yr = np.repeat(Yc, G.shape[0], axis=0)
            v = self.f1.eval_float(self._full(X, Yr)).reshape(Yc.shape[0], G.shape[0])
            i = v.argmin(axis=1)
            vals[s : s + chunk] = v[np.arange(Yc.shape[0]), i]
            args[s : s + chunk] = G[i]
        if self.polish:
            lo, hi = _float_box(self.box, self.inner)
            bounds = list(zip(lo, hi))
            for n in range(Y.shape[0]):
                y = Y[n : n + 1]

                def fun(x, y=y):
                    pt = self._full(x[None, :], y)
                    return self.f1.eval_float(pt)[0], np.array([g.eval_float(pt)[0] for g in self._grads])

                res = minimize(fun, args[n], jac=True, method="L-BFGS-B", bounds=bounds)
                if res.fun < vals[n]:
                    vals[n], args[n] = res.fun, res.x
        return vals - half, args

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return self._evaluate(Y)[0]


def lower_envelope(
    f1: Polynomial,
    I1,
    overlap,
    box: Box,
    eps,
    resolution: int,
    polish: bool = True,
) -> Envelope:
    """Sample ``min{f1(x, y) : x in box over I1 minus overlap} - eps/2`` on the overlap grid.

    With no private variables the envelope is ``f1(y) - eps/2``; with an
    empty overlap it is the single number ``min f1 - eps/2``.
    """
    I1, overlap = frozenset(I1), frozenset(overlap)
    if not overlap <= I1:
        raise ValueError("overlap must be a subset of I1")
    eps = to_fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not f1.support_vars() <= I1:
        raise ValueError("f1 uses variables outside I1")
    return Envelope(f1, tuple(sorted(I1 - overlap)), tuple(sorted(overlap)), box, eps, resolution, polish)


# ---------------------------------------------------------------------------
# polynomial approximation of the envelope


def _total_degree_indices(k: int, d: int) -> list[tuple[int, ...]]:
    if k == 0:
        return [()]
    out = []
    for first in range(d + 1):
        for rest in _total_degree_indices(k - 1, d - first):
            out.append((first,) + rest)
    return out


def _chebyshev_exact(n: int, t: Polynomial, cache: dict) -> Polynomial:
    if n not in cache:
        if n == 0:
            cache[0] = Polynomial.constant(1, t.nvars)
        elif n == 1:
            cache[1] = t
        else:
            cache[n] = 2 * t * _chebyshev_exact(n - 1, t, cache) - _chebyshev_exact(n - 2, t, cache)
    return cache[n]


def _fit_degree(env: Callable, overlap: Sequence[int], box: Box, degree: int, nvars: int):
    """Least-squares fit of total degree ``degree`` on a Chebyshev tensor grid."""
    k = len(overlap)
    lo, hi = _float_box(box, overlap)
    width = hi - lo
    live = [i for i in range(k) if width[i] > 0]
    m = 2 * degree + 2
    nodes = np.cos(np.pi * (np.arange(m) + 0.5) / m)
    axes = [nodes if i in live else np.zeros(1) for i in range(k)]
    if k:
        T = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    else:
        T = np.zeros((1, 0))
    Y = lo + (T + 1) / 2 * width
    vals = env(Y)
    idx = [a for a in _total_degree_indices(k, degree) if all(a[i] == 0 for i in range(k) if i not in live)]
    V = np.ones((T.shape[0], len(idx)))
    for c, a in enumerate(idx):
        for i, e in enumerate(a):
            if e:
                V[:, c] *= C.chebval(T[:, i], [0] * e + [1])
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    # exact reconstruction in the original variables
    ts, caches = [], []
    for i, v in enumerate(overlap):
        l, h = box[v]
        X = Polynomial.var(v, nvars)
        ts.append((2 * X - l - h) / (h - l) if h > l else Polynomial.zero(nvars))
        caches.append({})
    p = Polynomial.zero(nvars)
    for c, a in zip(coef, idx):
        q = rationalize(c)
        if q == 0:
            continue
        term = Polynomial.constant(q, nvars)
        for i, e in enumerate(a):
            if e:
                term = term * _chebyshev_exact(e, ts[i], caches[i])
        p = p + term
    p = Polynomial(nvars, {mm: rationalize(float(cc)) if cc.denominator > 2**40 else cc for mm, cc in p.items()})
    return p


def _check_points(overlap: Sequence[int], box: Box, resolution: int) -> np.ndarray:
    return box.grid(resolution, overlap) if overlap else np.zeros((1, 0))


def _deviation(p: Polynomial, overlap, check_pts, check_vals) -> float:
    full = np.zeros((check_pts.shape[0], p.nvars))
    if overlap:
        full[:, [v - 1 for v in overlap]] = check_pts
    return float(np.max(np.abs(p.eval_float(full) - check_vals)))


def _candidates(env: Envelope, box: Box, schedule, check_resolution: int):
    overlap = env.overlap
    pts = _check_points(overlap, box, check_resolution)
    vals = env(pts)
    for d in schedule:
        p = _fit_degree(env, overlap, box, d, env.f1.nvars)
        yield d, p, _deviation(p, overlap, pts, vals)
        if not overlap:
            return


def approx_poly(
    envelope: Envelope,
    overlap,
    box: Box,
    tol,
    schedule: Sequence[int] = SplitConfig.approx_degree_schedule,
    check_resolution: int = SplitConfig.approx_check_resolution,
) -> tuple[Polynomial, int, float]:
    """First degree in ``schedule`` whose fit is within ``tol`` on the check grid.

    Returns ``(p, degree, deviation)``; raises :class:`ApproximationError`
    carrying the best deviation when the schedule runs out.
    """
    if tuple(sorted(overlap)) != envelope.overlap:
        raise ValueError("overlap does not match the envelope")
    tol = float(to_fraction(tol))
    if tol <= 0:
        raise ValueError("tol must be positive")
    best = (math.inf, None)
    for d, p, dev in _candidates(envelope, box, schedule, check_resolution):
        if dev <= tol:
            return p, d, dev
        if dev < best[0]:
            best = (dev, p)
    raise ApproximationError(f"no degree in {list(schedule)} reached tolerance {tol:g}", best[0], best[1])


# ---------------------------------------------------------------------------
# splitting


def positive_lower_bound(
    p: Polynomial, box: Box, fraction=Fraction(1, 2), depth_cap: int = DEFAULT_DEPTH_CAP
) -> Fraction:
    """A certified lower bound on ``p`` over ``box``, or a non-positive number.

    Subdivision runs until every cell clears ``fraction`` times the sampled
    minimum, so the bound is usually within that factor of the true minimum.
    """
    rep = certify_positive(p, box, 0, depth_cap)
    if not rep.ok:
        return min(rep.lower_bound, Fraction(0))
    target = to_fraction(fraction) * rep.witness_value
    if rep.lower_bound < target:
        sharper = certify_positive(p, box, target, depth_cap)
        if sharper.ok:
            return max(sharper.lower_bound, rep.lower_bound)
    return rep.lower_bound


def _certify(h: Polynomial, box: Box, eps: Fraction, depth_cap: int) -> PositivityReport:
    rep = certify_positive(h, box, eps / 4, depth_cap)
    if not rep.ok:
        rep = certify_positive(h, box, 0, depth_cap)
    return rep


def split_two(
    f1: Polynomial,
    f2: Polynomial,
    I1,
    I2,
    box: Box,
    eps,
    config: SplitConfig | None = None,
) -> TwoSplit:
    """Write ``f1 + f2 = h1 + h2`` with ``h1 = f1 - p``, ``h2 = f2 + p`` both positive.

    ``p`` lives in the shared variables.  Degrees are tried in schedule order;
    a fit within ``eps/4`` of the envelope is certified first, and if none
    certifies, the best remaining fits are tried before giving up.
    """
    config = config or SplitConfig()
    I1, I2 = frozenset(I1), frozenset(I2)
    eps = to_fraction(eps)
    if not f1.support_vars() <= I1 or not f2.support_vars() <= I2:
        raise ValueError("summand uses variables outside its block")
    if config.strict_common_interval and not box.is_common_interval():
        raise ValueError("strict mode needs one common interval for every variable")
    b1, b2 = box.restrict(sorted(I1)), box.restrict(sorted(I2))
    env = lower_envelope(f1, I1, I1 & I2, box, eps, config.envelope_grid_resolution, config.polish)
    tried = []
    for d, p, dev in _candidates(env, box, config.approx_degree_schedule, config.approx_check_resolution):
        tried.append((dev, d, p))
        if dev > eps / 4:
            continue
        h1, h2 = f1 - p, f2 + p
        r1 = _certify(h1, b1, eps, config.depth_cap)
        if r1.ok:
            r2 = _certify(h2, b2, eps, config.depth_cap)
            if r2.ok:
                return TwoSplit(h1, h2, p, r1, r2, d, dev)
    last = None
    for dev, d, p in sorted(tried, key=lambda t: t[0]):
        if dev <= eps / 4:
            continue  # already rejected above
        h1, h2 = f1 - p, f2 + p
        r1 = _certify(h1, b1, eps, config.depth_cap)
        r2 = _certify(h2, b2, eps, config.depth_cap) if r1.ok else None
        if r1.ok and r2.ok:
            return TwoSplit(h1, h2, p, r1, r2, d, dev)
        last = (r1, r2)
    # fall back to the middle of the admissible band -min f2 < p < min f1,
    # which leaves more room wherever the band is wider than eps
    if env.overlap:
        env2 = lower_envelope(f2, I2, I1 & I2, box, eps, config.envelope_grid_resolution, config.polish)

        def mid(Y):
            return (env(Y) - env2(Y)) / 2

        pts = _check_points(env.overlap, box, config.approx_check_resolution)
        v1, v2 = env(pts), env2(pts)
        centre, room = (v1 - v2) / 2, (v1 + v2) / 2 + float(eps) / 4
        slack = []
        for d in config.approx_degree_schedule:
            p = _fit_degree(mid, env.overlap, box, d, f1.nvars)
            full = np.zeros((pts.shape[0], f1.nvars))
            full[:, [v - 1 for v in env.overlap]] = pts
            slack.append((float(np.max(np.abs(p.eval_float(full) - centre) - room)), d, p))
        for excess, d, p in sorted(slack, key=lambda t: t[0])[:3]:
            h1, h2 = f1 - p, f2 + p
            r1 = _certify(h1, b1, eps, config.depth_cap)
            r2 = _certify(h2, b2, eps, config.depth_cap) if r1.ok else None
            if r1.ok and r2.ok:
                log.debug("split_two: centred fit of degree %d certified", d)
                return TwoSplit(h1, h2, p, r1, r2, d, excess)
            last = (r1, r2)
    best_dev = min((t[0] for t in tried), default=math.inf)
    raise SplitError(
        f"could not certify both pieces (best envelope deviation {best_dev:.3g}, tolerance {float(eps) / 4:.3g})",
        best_deviation=best_dev,
        reports=last,
    )


def split_many(
    summands: Sequence[Polynomial],
    pattern: SparsityPattern,
    box: Box,
    config: SplitConfig | None = None,
    lower_bound=None,
) -> SplitResult:
    """Split per-block summands into per-block positive pieces.

    ``lower_bound``, when given, must be a certified positive lower bound of
    the sum on ``box``; it replaces the search for one.

    The last block is peeled off the sum of the earlier ones; the transfer is
    absorbed into the earlier block named by the RIP witness, and the
    procedure recurses on one block fewer.
    """
    config = config or SplitConfig()
    rip = check_rip(pattern)
    if not rip.holds:
        raise ValueError(f"block order violates RIP at block {rip.violation + 1}")
    if len(summands) != len(pattern):
        raise ValueError("need exactly one summand per block")
    if config.strict_common_interval and not box.restrict(sorted(pattern.union())).is_common_interval():
        raise ValueError("strict mode needs one common interval for every variable")
    f = list(summands)
    for j, (fj, b) in enumerate(zip(f, pattern.blocks)):
        if not fj.support_vars() <= b:
            raise ValueError(f"summand {j + 1} uses variables outside block {sorted(b)}")
    r = len(f)
    total = sum(f[1:], f[0])
    full_box = box.restrict(sorted(pattern.union()))
    if lower_bound is not None:
        eps = to_fraction(lower_bound)
        if eps <= 0:
            raise ValueError("lower_bound must be positive")
    elif config.epsilon > 0:
        check = certify_positive(total, full_box, config.epsilon, config.depth_cap)
        if not check.ok:
            raise SplitError(f"sum is not certified >= {config.epsilon} on the box", report=check)
        eps = config.epsilon
    else:
        eps = positive_lower_bound(total, full_box, config.eps_fraction, config.depth_cap)
        if eps <= 0:
            rep = certify_positive(total, full_box, 0, config.depth_cap)
            raise SplitError("sum is not certified positive on the box", report=rep)
    eps0 = eps
    h: list[Polynomial | None] = [None] * r
    margins: list[PositivityReport | None] = [None] * r
    transfers: list[Transfer] = []
    for i in range(r - 1, 0, -1):
        U = pattern.union(i)
        ftilde = sum(f[1:i], f[0])
        log.info("split: peeling block %d (overlap %s), eps=%s", i + 1, sorted(U & pattern.blocks[i]), eps)
        res = split_two(ftilde, f[i], U, pattern.blocks[i], box, eps, config)
        h[i], margins[i] = res.h2, res.report2
        k = rip.witnesses[i]
        f[k] = f[k] - res.p
        transfers.append(Transfer(res.p, k, i))
        if i == 1:
            margins[0] = res.report1
        else:
            eps = max(res.report1.lower_bound, positive_lower_bound(res.h1, box.restrict(sorted(U)), config.eps_fraction, config.depth_cap))
    h[0] = f[0]
    if r == 1:
        margins[0] = certify_positive(f[0], box.restrict(sorted(pattern.blocks[0])), 0, config.depth_cap)
        if not margins[0].ok:
            raise SplitError("single block is not certified positive", report=margins[0])
    return SplitResult(h, transfers, margins, eps0, pattern)
