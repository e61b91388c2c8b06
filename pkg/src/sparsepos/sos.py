"""Sums of squares through Gram matrices, ball certificates and sparse module membership.

A sum of squares is stored as a monomial basis ``z`` and a symmetric rational
Gram matrix ``G`` with ``sigma = z^T G z``.  Grams come from the interior
point solver in :mod:`sparsepos.sdp`, are rounded to rationals, and the
rounding error is pushed back onto the Gram entries of the free SOS term,
so identities usually hold exactly.  Whatever cannot be absorbed stays in
``residual``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .certificate import Certificate, ProblemSpec, certify
from .poly import Box, Monomial, Polynomial, fraction_str, rationalize, to_fraction
from .sdp import MAX_BASIS, SDPInfeasible, solve_sdp
from .split import SplitConfig

__all__ = [
    "SOSDecomposition",
    "BallCertificate",
    "BlockMembership",
    "ModuleMembership",
    "SOSInfeasible",
    "SOSError",
    "monomial_basis",
    "sos_decompose",
    "gram_module",
    "cassier_certificate",
    "ball_polynomial",
    "sparse_putinar",
    "sos_sum",
    "sos_product",
]

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
WITNESS_TOL = 1e-9


class SOSInfeasible(RuntimeError):
    """No PSD Gram matrix over the chosen bases matches the target."""

    def __init__(self, message: str, dual: np.ndarray | None = None):
        super().__init__(message)
        self.dual = dual


class SOSError(RuntimeError):
    """A certificate could not be produced (schedule exhausted, missing witness, bad rounding)."""


# ---------------------------------------------------------------------------
# Gram-matrix sums of squares


def monomial_basis(variables: Iterable[int], degree: int) -> list[Monomial]:
    """All monomials in ``variables`` of total degree ``<= degree``, by degree then lex."""
    vs = sorted(variables)
    out = [Monomial()]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(vs, d):
            out.append(Monomial((v, 1) for v in combo))
    return out


def _psd_factor(A: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L^T = A`` for PSD ``A``, allowing zero pivots."""
    n = A.shape[0]
    L = np.zeros((n, n))
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        col = A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]
        if d > tol * scale:
            L[j, j] = math.sqrt(d)
            L[j + 1 :, j] = col / L[j, j]
        elif d < -tol * scale or np.abs(col).max(initial=0.0) > math.sqrt(tol) * scale:
            raise np.linalg.LinAlgError(f"matrix is not PSD (pivot {d:.3g} at {j})")
    return L


def _float(G: np.ndarray) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in G], dtype=float).reshape(G.shape)


def _gram_polynomial(nvars: int, basis: Sequence[Monomial], G: np.ndarray) -> Polynomial:
    acc: dict[Monomial, Fraction] = {}
    n = len(basis)
    for i in range(n):
        for j in range(i, n):
            c = G[i, j]
            if c:
                m = basis[i] * basis[j]
                acc[m] = acc.get(m, Fraction(0)) + (c if i == j else 2 * c)
    return Polynomial(nvars, acc)


@dataclass
class SOSDecomposition:
    """``sigma = basis^T gram basis`` with a numerical PSD witness.

    ``psd_witness @ psd_witness.T`` equals ``gram - margin*I`` up to rounding.
    ``target`` and ``residual`` are set when the decomposition was fitted to
    a given polynomial; ``residual = target - sigma`` exactly.
    """

    nvars: int
    basis: list[Monomial]
    gram: np.ndarray
    margin: Fraction = Fraction(0)
    psd_witness: np.ndarray = field(default=None, repr=False)
    target: Polynomial | None = None
    residual: Polynomial | None = None

    def __post_init__(self):
        n = len(self.basis)
        self.gram = np.asarray(self.gram, dtype=object).reshape(n, n)
        for i in range(n):
            for j in range(i):
                if self.gram[i, j] != self.gram[j, i]:
                    raise ValueError("gram matrix is not symmetric")
        if self.psd_witness is None:
            self.psd_witness = _psd_factor(_float(self.gram) - float(self.margin) * np.eye(n)) if n else np.zeros((0, 0))
        if self.target is not None and self.residual is None:
            self.residual = self.target - self.polynomial()

    @classmethod
    def from_gram(cls, nvars: int, basis: Sequence[Monomial], gram, target: Polynomial | None = None) -> "SOSDecomposition":
        """Attach a margin and PSD witness to an exact rational Gram matrix."""
        basis = list(basis)
        G = np.asarray(gram, dtype=object).reshape(len(basis), len(basis))
        if not basis:
            return cls(nvars, [], G, target=target)
        lam = float(np.linalg.eigvalsh(_float(G))[0])
        margin = Fraction(math.floor(max(0.0, lam / 2) * 2**20), 2**20)
        return cls(nvars, basis, G, margin, target=target)

    @classmethod
    def zero(cls, nvars: int) -> "SOSDecomposition":
        return cls(nvars, [], np.zeros((0, 0), dtype=object))

    @classmethod
    def square(cls, q: Polynomial) -> "SOSDecomposition":
        """Rank-one Gram matrix for ``q**2``."""
        terms = q.sorted_terms()
        basis = [m for m, _ in terms]
        c = np.array([cc for _, cc in terms], dtype=object)
        G = np.outer(c, c) if len(c) else np.zeros((0, 0), dtype=object)
        return cls(q.nvars, basis, G)

    def polynomial(self) -> Polynomial:
        return _gram_polynomial(self.nvars, self.basis, self.gram)

    def basis_values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        V = np.ones((pts.shape[0], len(self.basis)))
        for c, m in enumerate(self.basis):
            for v, e in m:
                V[:, c] *= pts[:, v - 1] ** e
        return V

    def eval_float(self, pts: np.ndarray) -> np.ndarray:
        """Float values via the factor, so they are sums of squares up to rounding."""
        V = self.basis_values(pts)
        if not self.basis:
            return np.zeros(V.shape[0])
        W = V @ self.psd_witness
        return np.sum(W * W, axis=1) + float(self.margin) * np.sum(V * V, axis=1)

    @property
    def residual_norm(self) -> float:
        return float(self.residual.max_abs_coeff()) if self.residual is not None else 0.0

    def witness_error(self) -> float:
        n = len(self.basis)
        if not n:
            return 0.0
        target = _float(self.gram) - float(self.margin) * np.eye(n)
        return float(np.abs(self.psd_witness @ self.psd_witness.T - target).max())

    def check(self, residual_tol: float = RESIDUAL_TOL, witness_tol: float = WITNESS_TOL) -> bool:
        return self.margin >= 0 and self.residual_norm <= residual_tol and self.witness_error() <= witness_tol

    def to_json(self) -> dict:
        out = {
            "basis": [m.dense(self.nvars) for m in self.basis],
            "gram": [[fraction_str(x) for x in row] for row in self.gram],
            "margin": fraction_str(self.margin),
            "witness_error": self.witness_error(),
        }
        if self.residual is not None:
            out["residual"] = self.residual.to_json()
            out["residual_norm"] = self.residual_norm
        return out


def _merge(nvars: int, basis: list[Monomial], G: np.ndarray) -> SOSDecomposition:
    """Collapse repeated basis monomials by the congruence ``P^T G P`` (keeps PSD)."""
    unique: list[Monomial] = []
    where: dict[Monomial, int] = {}
    for m in basis:
        if m not in where:
            where[m] = len(unique)
            unique.append(m)
    n = len(unique)
    H = np.full((n, n), Fraction(0), dtype=object)
    for a, ma in enumerate(basis):
        for b, mb in enumerate(basis):
            if G[a, b]:
                H[where[ma], where[mb]] += G[a, b]
    keep = [i for i in range(n) if H[i, i] != 0]
    H = H[np.ix_(keep, keep)] if keep else np.zeros((0, 0), dtype=object)
    return SOSDecomposition.from_gram(nvars, [unique[i] for i in keep], H)


def sos_sum(parts: Sequence[SOSDecomposition], nvars: int) -> SOSDecomposition:
    """Block-diagonal sum, merged on common monomials."""
    parts = [p for p in parts if p.basis]
    if not parts:
        return SOSDecomposition.zero(nvars)
    basis = [m for p in parts for m in p.basis]
    n = len(basis)
    G = np.full((n, n), Fraction(0), dtype=object)
    at = 0
    for p in parts:
        k = len(p.basis)
        G[at : at + k, at : at + k] = p.gram
        at += k
    return _merge(nvars, basis, G)


def sos_product(a: SOSDecomposition, b: SOSDecomposition) -> SOSDecomposition:
    """Kronecker Gram of a product of two sums of squares."""
    if not a.basis or not b.basis:
        return SOSDecomposition.zero(a.nvars)
    basis = [ma * mb for ma in a.basis for mb in b.basis]
    return _merge(a.nvars, basis, np.kron(a.gram, b.gram))


# ---------------------------------------------------------------------------
# Gram SDPs


def _in_half_newton(point: Sequence[int], support: np.ndarray) -> bool:
    """``2*point`` lies in the convex hull of the exponent vectors ``support``."""
    m = support.shape[0]
    A = np.vstack([support.T, np.ones((1, m))])
    b = np.append(2 * np.asarray(point, dtype=float), 1.0)
    res = linprog(np.zeros(m), A_eq=A, b_eq=b, bounds=[(0, None)] * m, method="highs")
    return res.status == 0


def _newton_basis(f: Polynomial, variables: Sequence[int], degree: int) -> list[Monomial]:
    support = np.array([[m.exp(v) for v in variables] for m, _ in f.items()], dtype=float)
    out = []
    for m in monomial_basis(variables, degree):
        if _in_half_newton([m.exp(v) for v in variables], support):
            out.append(m)
    return out


def gram_module(
    target: Polynomial,
    generators: Sequence[Polynomial],
    bases: Sequence[Sequence[Monomial]],
    max_size: int = MAX_BASIS,
) -> list[SOSDecomposition]:
    """Find SOS ``s_k = z_k^T G_k z_k`` with ``target = sum_k generators[k] * s_k``.

    ``generators[0]`` must be the constant 1; its Gram entries absorb the
    rounding error of the others, so the identity is exact whenever every
    leftover monomial is a product of two monomials of ``bases[0]``.
    """
    nvars = target.nvars
    if not generators or generators[0] != Polynomial.constant(1, nvars):
        raise ValueError("the first generator must be 1")
    bases = [list(b) for b in bases]
    rows: dict[Monomial, list[list[np.ndarray]]] = {}

    def row(m: Monomial):
        if m not in rows:
            rows[m] = [np.zeros((len(b), len(b))) for b in bases]
        return rows[m]

    for k, (g, z) in enumerate(zip(generators, bases)):
        for i, j in itertools.product(range(len(z)), repeat=2):
            zz = z[i] * z[j]
            for mg, cg in g.items():
                row(mg * zz)[k][i, j] += float(cg)
    unreachable = [m for m, _ in target.items() if m not in rows]
    if unreachable:
        raise SOSInfeasible(f"no basis product reaches the monomial {unreachable[0]!r}")
    monos = list(rows)
    b = np.array([float(target.coeff(m)) for m in monos])
    A = [rows[m] for m in monos]
    sizes = [len(z) for z in bases]
    if any(s == 0 for s in sizes):
        keep = [k for k, s in enumerate(sizes) if s]
        A = [[r[k] for k in keep] for r in A]
        sizes = [sizes[k] for k in keep]
    else:
        keep = list(range(len(bases)))
    if not sizes:
        if not target.is_zero():
            raise SOSInfeasible("empty bases cannot represent a nonzero target")
        return [SOSDecomposition.zero(nvars) for _ in bases]
    try:
        res = solve_sdp(A, b, sizes, max_size=max_size)
    except SDPInfeasible as exc:
        raise SOSInfeasible(f"no PSD Gram matrices exist ({exc})", exc.y) from exc
    grams: list[np.ndarray] = [np.zeros((0, 0), dtype=object) for _ in bases]
    for k, X in zip(keep, res.X):
        X = (X + X.T) / 2
        grams[k] = np.array([[rationalize(x) for x in r] for r in X], dtype=object).reshape(X.shape)
    # push the rounding error back onto the free term, entry class by entry class
    approx = Polynomial.zero(nvars)
    for k in range(1, len(bases)):
        if bases[k]:
            approx = approx + generators[k] * _gram_polynomial(nvars, bases[k], grams[k])
    if bases[0]:
        z0 = bases[0]
        classes: dict[Monomial, list[tuple[int, int]]] = {}
        for i, j in itertools.product(range(len(z0)), repeat=2):
            classes.setdefault(z0[i] * z0[j], []).append((i, j))
        free = _gram_polynomial(nvars, z0, grams[0])
        diff = target - approx - free
        fixed = grams[0].copy()
        for m, c in diff.items():
            if m in classes:
                share = c / len(classes[m])
                for i, j in classes[m]:
                    fixed[i, j] += share
        try:
            _psd_factor(_float(fixed))
            grams[0] = fixed
        except np.linalg.LinAlgError:
            log.debug("gram_module: exact correction left the PSD cone, keeping the rounded Gram")
    out = []
    for k, z in enumerate(bases):
        try:
            out.append(SOSDecomposition.from_gram(nvars, z, grams[k]))
        except np.linalg.LinAlgError as exc:
            raise SOSError(f"rounded Gram matrix {k} is not PSD: {exc}") from exc
    total = sum((g * s.polynomial() for g, s in zip(generators, out)), Polynomial.zero(nvars))
    out[0].target = target
    out[0].residual = target - total
    return out


def sos_decompose(f: Polynomial, basis_degree: int | None = None, tol: float = RESIDUAL_TOL) -> SOSDecomposition:
    """Gram decomposition of ``f`` over a Newton-polytope-reduced monomial basis.

    Raises :class:`SOSInfeasible` when no PSD Gram matrix exists for that
    basis and :class:`SOSError` when the rounded result misses ``tol``.
    """
    nvars = f.nvars
    if f.is_zero():
        return SOSDecomposition(nvars, [], np.zeros((0, 0), dtype=object), target=f)
    deg = f.degree
    if deg % 2:
        raise SOSInfeasible(f"odd degree {deg}")
    if basis_degree is None:
        basis_degree = deg // 2
    if 2 * basis_degree < deg:
        raise SOSInfeasible(f"degree {deg} needs basis degree >= {deg // 2}")
    variables = sorted(f.support_vars())
    basis = _newton_basis(f, variables, basis_degree)
    products = {a * b for a in basis for b in basis}
    stray = [m for m, _ in f.items() if m not in products]
    if stray:
        raise SOSInfeasible(f"monomial {stray[0]!r} lies outside the Newton polytope reach of the basis")
    (sigma,) = gram_module(f, [Polynomial.constant(1, nvars)], [basis])
    if sigma.residual_norm > tol:
        raise SOSError(f"residual {sigma.residual_norm:.3g} exceeds {tol:g}")
    return sigma


# ---------------------------------------------------------------------------
# ball certificates


def ball_polynomial(radius_sq, variables: Iterable[int], nvars: int) -> Polynomial:
    """``R**2 - sum X_i**2`` over ``variables``."""
    out = Polynomial.constant(to_fraction(radius_sq), nvars)
    for v in variables:
        out = out - Polynomial.var(v, nvars) ** 2
    return out


def _radius_sq(radius) -> Fraction:
    return to_fraction(radius) ** 2


@dataclass
class BallCertificate:
    """``f = sigma + tau * (R**2 - sum_{i in variables} X_i**2)``."""

    f: Polynomial
    sigma: SOSDecomposition
    tau: SOSDecomposition
    radius_sq: Fraction
    variables: tuple[int, ...]

    @property
    def radius(self) -> Fraction | float:
        num, den = self.radius_sq.numerator, self.radius_sq.denominator
        rn, rd = math.isqrt(num), math.isqrt(den)
        if rn * rn == num and rd * rd == den:
            return Fraction(rn, rd)
        return math.sqrt(self.radius_sq)

    @property
    def ball(self) -> Polynomial:
        return ball_polynomial(self.radius_sq, self.variables, self.f.nvars)

    @property
    def residual(self) -> Polynomial:
        return self.f - self.sigma.polynomial() - self.tau.polynomial() * self.ball

    @property
    def residual_norm(self) -> float:
        return float(self.residual.max_abs_coeff())

    def to_json(self) -> dict:
        return {
            "radius_sq": fraction_str(self.radius_sq),
            "variables": list(self.variables),
            "sigma": self.sigma.to_json(),
            "tau": self.tau.to_json(),
            "residual_norm": self.residual_norm,
        }


def _default_schedule(f: Polynomial) -> list[tuple[int, int]]:
    d = f.degree + f.degree % 2
    return [(d + 2 * i, max(0, d + 2 * i - 2)) for i in range(3)]


def _schedule(degrees, f: Polynomial) -> list[tuple[int, int]]:
    if degrees is None:
        return _default_schedule(f)
    if len(degrees) == 2 and all(isinstance(x, int) for x in degrees):
        return [tuple(degrees)]
    return [tuple(int(x) for x in pair) for pair in degrees]


def cassier_certificate(
    f: Polynomial,
    radius,
    degrees=None,
    variables: Iterable[int] | None = None,
    tol: float = RESIDUAL_TOL,
    radius_is_squared: bool = False,
) -> BallCertificate:
    """``sigma, tau`` SOS with ``f = sigma + tau*(R**2 - sum X_i**2)``.

    ``degrees`` is a pair ``(deg_sigma, deg_tau)`` or a list of such pairs
    tried in order; the default escalates from the degree of ``f``.  A plain
    SOS decomposition (``tau = 0``) is tried first.
    """
    nvars = f.nvars
    rsq = to_fraction(radius) if radius_is_squared else _radius_sq(radius)
    if rsq <= 0:
        raise ValueError("radius must be positive")
    variables = tuple(sorted(f.support_vars() if variables is None else variables))
    if not f.support_vars() <= set(variables):
        raise ValueError("f uses variables outside the ball")
    ball = ball_polynomial(rsq, variables, nvars)
    if f.degree % 2 == 0:
        try:
            sigma = sos_decompose(f, tol=tol)
            return BallCertificate(f, sigma, SOSDecomposition.zero(nvars), rsq, variables)
        except (SOSInfeasible, SOSError):
            pass
    last = None
    for ds, dt in _schedule(degrees, f):
        if ds < f.degree or ds < dt + 2:
            continue
        zs, zt = monomial_basis(variables, ds // 2), monomial_basis(variables, dt // 2)
        if max(len(zs), len(zt)) > MAX_BASIS:
            break
        try:
            sigma, tau = gram_module(f, [Polynomial.constant(1, nvars), ball], [zs, zt])
        except (SOSInfeasible, SOSError) as exc:
            last = exc
            log.info("cassier: degrees (%d, %d) failed: %s", ds, dt, exc)
            continue
        cert = BallCertificate(f, sigma, tau, rsq, variables)
        if cert.residual_norm <= tol:
            return cert
        last = SOSError(f"residual {cert.residual_norm:.3g} at degrees ({ds}, {dt})")
    raise SOSError(f"degree schedule exhausted without a ball certificate ({last})")


# ---------------------------------------------------------------------------
# sparse module membership


@dataclass
class BlockMembership:
    """``sigma0 + sum_i sigma_i * g_i`` for the constraints of one block."""

    block: int
    sigma0: SOSDecomposition
    multipliers: list[tuple[int, Polynomial, SOSDecomposition]]

    def polynomial(self) -> Polynomial:
        out = self.sigma0.polynomial()
        for _, g, s in self.multipliers:
            out = out + s.polynomial() * g
        return out

    def eval_float(self, pts: np.ndarray) -> np.ndarray:
        out = self.sigma0.eval_float(pts)
        for _, g, s in self.multipliers:
            out = out + s.eval_float(pts) * g.eval_float(pts)
        return out

    def sos_parts(self) -> list[SOSDecomposition]:
        return [self.sigma0] + [s for _, _, s in self.multipliers]

    def to_json(self) -> dict:
        return {
            "block": self.block + 1,
            "sigma0": self.sigma0.to_json(),
            "multipliers": [{"index": i + 1, "g": g.to_json(), "sigma": s.to_json()} for i, g, s in self.multipliers],
        }


@dataclass
class ModuleMembership:
    """``f`` written as a sum over blocks of quadratic-module elements."""

    f: Polynomial
    blocks: list[BlockMembership]
    certificate: Certificate | None
    ball_certificates: list[BallCertificate]

    def rhs(self) -> Polynomial:
        return sum((b.polynomial() for b in self.blocks), Polynomial.zero(self.f.nvars))

    @property
    def residual(self) -> Polynomial:
        return self.f - self.rhs()

    @property
    def residual_norm(self) -> float:
        return float(self.residual.max_abs_coeff())

    def eval_rhs(self, pts: np.ndarray) -> np.ndarray:
        return sum((b.eval_float(pts) for b in self.blocks), np.zeros(np.atleast_2d(pts).shape[0]))

    def checks(self, tol: float = RESIDUAL_TOL) -> dict[str, tuple[bool, str]]:
        parts = [s for b in self.blocks for s in b.sos_parts()]
        worst = max((s.witness_error() for s in parts), default=0.0)
        return {
            "identity": (self.residual_norm <= tol, f"residual max-norm {self.residual_norm:.3g}"),
            "psd_witness": (worst <= WITNESS_TOL, f"largest witness error {worst:.3g}"),
            "margins": (all(s.margin >= 0 for s in parts), "all Gram margins >= 0"),
        }

    @property
    def ok(self) -> bool:
        return all(ok for ok, _ in self.checks().values())

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "residual_norm": self.residual_norm,
            "checks": {n: {"pass": ok, "detail": d} for n, (ok, d) in self.checks().items()},
            "lambda": fraction_str(self.certificate.lam) if self.certificate else None,
            "k": self.certificate.k if self.certificate else None,
            "blocks": [b.to_json() for b in self.blocks],
            "ball_certificates": [c.to_json() for c in self.ball_certificates],
        }


def _literal_ball(problem: ProblemSpec, j: int) -> tuple[int, Fraction] | None:
    """Index and ``R**2`` of a constraint of block ``j`` equal to ``R**2 - sum_{I_j} X_i**2``."""
    block = sorted(problem.pattern.blocks[j])
    for idx, g in problem.block_constraints(j):
        c = g.coeff(Monomial())
        if c > 0 and g == ball_polynomial(c, block, problem.nvars):
            return idx, c
    return None


def _ball_witness(problem: ProblemSpec, j: int, rsq: Fraction, degrees: Sequence[int]) -> BlockMembership:
    """Express ``R**2 - sum_{I_j} X_i**2`` in the quadratic module of block ``j``."""
    n = problem.nvars
    block = sorted(problem.pattern.blocks[j])
    target = ball_polynomial(rsq, block, n)
    cons = problem.block_constraints(j)
    for idx, g in cons:
        if g == target:
            return BlockMembership(j, SOSDecomposition.zero(n), [(idx, g, SOSDecomposition.square(Polynomial.constant(1, n)))])
    gens = [Polynomial.constant(1, n)] + [g for _, g in cons]
    last = None
    for d in degrees:
        bases = [monomial_basis(block, d // 2)]
        for g in gens[1:]:
            dg = d - g.degree
            bases.append(monomial_basis(block, dg // 2) if dg >= 0 else [])
        try:
            parts = gram_module(target, gens, bases)
        except (SOSInfeasible, SOSError) as exc:
            last = exc
            continue
        if parts[0].residual_norm <= RESIDUAL_TOL:
            return BlockMembership(j, parts[0], [(idx, g, s) for (idx, g), s in zip(cons, parts[1:])])
    raise SOSError(f"ball-witness membership missing for block {j + 1} (R^2 = {rsq}): {last}")


def _rational_above_sqrt(x: Fraction) -> Fraction:
    """A rational ``>= sqrt(x)``, exact when ``x`` is a rational square."""
    num, den = x.numerator, x.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    q = Fraction(math.isqrt(num * den * 2**40) + 1, den * 2**20)
    return q


def _blockwise_sos(problem: ProblemSpec) -> list[BlockMembership] | None:
    # every summand already SOS in its block: no box certificate needed
    n = problem.nvars
    out = []
    for j in range(len(problem.pattern)):
        fj = problem.block_f(j)
        if fj.degree % 2:
            return None
        try:
            s = sos_decompose(fj) if not fj.is_zero() else SOSDecomposition.zero(n)
        except (SOSInfeasible, SOSError, ValueError):
            return None
        if not s.check():
            return None
        zero = SOSDecomposition.zero(n)
        out.append(BlockMembership(j, s, [(idx, g, zero) for idx, g in problem.block_constraints(j)]))
    return out


def sparse_putinar(
    problem: ProblemSpec,
    config: SplitConfig | None = None,
    radii=None,
    degrees=None,
    ball_witnesses: dict[int, BlockMembership] | None = None,
    k_max: int = 50,
    witness_degrees: Sequence[int] = (2, 4),
) -> ModuleMembership:
    """Write ``f`` as ``sum_j (sigma0_j + sum_i sigma_ij g_ij)`` with every term in its block.

    ``radii`` gives ``R_j`` per block (one number applies to every block);
    blocks without a radius use a constraint that is literally
    ``R_j**2 - sum_{I_j} X_i**2``.  The remainders of the box certificate on
    ``[-R, R]^n`` get ball certificates, whose ``tau`` parts are rewritten
    through each block's ball witness.  When every block summand is already
    a sum of squares, that decomposition is returned directly.
    """
    n = problem.nvars
    r = len(problem.pattern)
    if radii is None:
        radii = [None] * r
    elif not isinstance(radii, (list, tuple)):
        radii = [radii] * r
    if len(radii) != r:
        raise ValueError(f"need {r} radii, got {len(radii)}")
    direct = _blockwise_sos(problem)
    if direct is not None:
        return ModuleMembership(problem.f, direct, None, [])
    ball_witnesses = dict(ball_witnesses or {})
    rsq: list[Fraction] = []
    for j in range(r):
        if radii[j] is not None:
            rsq.append(_radius_sq(radii[j]))
            continue
        lit = _literal_ball(problem, j)
        if lit is None:
            raise SOSError(f"block {j + 1} has no radius and no literal ball constraint")
        rsq.append(lit[1])
    for j in range(r):
        if j not in ball_witnesses:
            ball_witnesses[j] = _ball_witness(problem, j, rsq[j], witness_degrees)
    R = max(_rational_above_sqrt(x) for x in rsq)
    region = Box.cube(sorted(problem.pattern.union()), -R, R)
    cert = certify(problem.with_region(region), config, k_max=k_max)
    one = Polynomial.constant(1, n)
    blocks = []
    balls = []
    for j in range(r):
        h = cert.remainders[j].h
        bc = cassier_certificate(h, rsq[j], degrees, sorted(problem.pattern.blocks[j]), radius_is_squared=True)
        balls.append(bc)
        wit = ball_witnesses[j]
        sigma0 = sos_sum([bc.sigma, sos_product(bc.tau, wit.sigma0)], n)
        per_index: dict[int, list[SOSDecomposition]] = {}
        gs: dict[int, Polynomial] = {}
        for t in cert.multiplier_terms:
            if t.block == j:
                q = (one - cert.lam * t.g) ** cert.k
                per_index.setdefault(t.index, []).append(SOSDecomposition.square(q))
                gs[t.index] = t.g
        for idx, g, s in wit.multipliers:
            per_index.setdefault(idx, []).append(sos_product(bc.tau, s))
            gs[idx] = g
        mults = [(idx, gs[idx], sos_sum(per_index[idx], n)) for idx in sorted(per_index)]
        blocks.append(BlockMembership(j, sigma0, mults))
    return ModuleMembership(problem.f, blocks, cert, balls)
