"""Block-sparse positivity certificates with constraint multipliers.

For ``f = sum_j f_j`` positive on the set cut out by block-local constraints
``g_i^(j) >= 0`` and a bounding box ``region``, build

    f = sum_{j,i} (1 - lam*g_i^(j))**(2k) * g_i^(j) + sum_j h_j

with ``0 < lam <= 1`` chosen so ``lam*g <= 1`` on the region, ``k`` the
smallest exponent for which the remainder ``f_k`` is certified positive on the
region, and ``h_j`` the block pieces of ``f_k`` from :func:`split_many`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .poly import Box, Polynomial, fraction_str, to_fraction
from .positivity import (
    DEFAULT_DEPTH_CAP,
    DISPROVED,
    PositivityReport,
    bernstein_upper_bound,
    certify_positive,
)
from .sparsity import SparsityPattern, assign_summands, check_rip
from .split import SplitConfig, SplitError, Transfer, split_many

__all__ = [
    "ProblemSpec",
    "MultiplierTerm",
    "Remainder",
    "Certificate",
    "VerificationReport",
    "FindKError",
    "choose_lambda",
    "multiplier",
    "build_fk",
    "find_k",
    "certify",
    "verify_certificate",
]

log = logging.getLogger(__name__)

DEFAULT_K_MAX = 50
LAMBDA_DEPTH = 4
SHARPEN = Fraction(19, 20)
SHARPEN_CELLS = 4000


class FindKError(RuntimeError):
    """No exponent up to ``k_max`` gave a certifiably positive remainder."""

    def __init__(self, message: str, trajectory: list[tuple[int, Fraction, str]]):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class ProblemSpec:
    summands: list[tuple[int, Polynomial]]
    constraints: list[tuple[int, Polynomial]]
    pattern: SparsityPattern
    region: Box

    def __post_init__(self):
        r = len(self.pattern)
        for kind, items in (("summand", self.summands), ("constraint", self.constraints)):
            for j, p in items:
                if not 0 <= j < r:
                    raise ValueError(f"{kind} refers to block {j + 1}, only {r} blocks")
                if p.nvars != self.pattern.nvars:
                    raise ValueError(f"{kind} has nvars={p.nvars}, pattern has {self.pattern.nvars}")
                if not p.support_vars() <= self.pattern.blocks[j]:
                    raise ValueError(
                        f"{kind} uses variables {sorted(p.support_vars())} outside block {sorted(self.pattern.blocks[j])}"
                    )
        rip = check_rip(self.pattern)
        if not rip.holds:
            raise ValueError(f"block order violates RIP at block {rip.violation + 1}")
        missing = [v for v in range(1, self.nvars + 1) if v in self.pattern.union() and v not in self.region]
        if missing:
            raise ValueError(f"region has no interval for variables {missing}")

    @property
    def nvars(self) -> int:
        return self.pattern.nvars

    @property
    def f(self) -> Polynomial:
        return sum((p for _, p in self.summands), Polynomial.zero(self.nvars))

    def block_f(self, j: int) -> Polynomial:
        return sum((p for jj, p in self.summands if jj == j), Polynomial.zero(self.nvars))

    def block_constraints(self, j: int) -> list[tuple[int, Polynomial]]:
        """``(position in self.constraints, g)`` for constraints of block ``j``."""
        return [(n, g) for n, (jj, g) in enumerate(self.constraints) if jj == j]

    def with_region(self, region: Box) -> "ProblemSpec":
        return ProblemSpec(list(self.summands), list(self.constraints), self.pattern, region)


@dataclass
class MultiplierTerm:
    block: int
    index: int  # position in ProblemSpec.constraints
    g: Polynomial
    term: Polynomial


@dataclass
class Remainder:
    block: int
    h: Polynomial
    report: PositivityReport


@dataclass
class Certificate:
    lam: Fraction
    k: int
    multiplier_terms: list[MultiplierTerm]
    remainders: list[Remainder]
    transfers: list[Transfer] = field(default_factory=list)
    fk_report: PositivityReport | None = None

    def rhs(self, nvars: int) -> Polynomial:
        out = Polynomial.zero(nvars)
        for t in self.multiplier_terms:
            out = out + t.term
        for r in self.remainders:
            out = out + r.h
        return out

    def to_json(self) -> dict:
        return {
            "lambda": fraction_str(self.lam),
            "k": self.k,
            "multiplier_terms": [
                {"block": t.block + 1, "index": t.index + 1, "g": t.g.to_json(), "term": t.term.to_json()}
                for t in self.multiplier_terms
            ],
            "remainders": [{"block": r.block + 1, "h": r.h.to_json(), "report": r.report.to_json()} for r in self.remainders],
            "transfers": [t.to_json() for t in self.transfers],
            "fk_report": self.fk_report.to_json() if self.fk_report else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        terms = [
            MultiplierTerm(int(t["block"]) - 1, int(t["index"]) - 1, Polynomial.from_json(t["g"]), Polynomial.from_json(t["term"]))
            for t in d["multiplier_terms"]
        ]
        rems = [
            Remainder(int(r["block"]) - 1, Polynomial.from_json(r["h"]), PositivityReport.from_json(r["report"]))
            for r in d["remainders"]
        ]
        transfers = [
            Transfer(Polynomial.from_json(t["p"]), int(t["source"]) - 1, int(t["target"]) - 1) for t in d.get("transfers", [])
        ]
        fk = d.get("fk_report")
        return cls(
            Fraction(d["lambda"]),
            int(d["k"]),
            terms,
            rems,
            transfers,
            PositivityReport.from_json(fk) if fk else None,
        )


def choose_lambda(constraints: Sequence[Polynomial], region: Box, depth: int = LAMBDA_DEPTH) -> Fraction:
    """``min(1, 1/U)`` with ``U`` a certified upper bound of every ``g`` on ``region``."""
    U = None
    for g in constraints:
        u = bernstein_upper_bound(g, region, depth)
        U = u if U is None else max(U, u)
    if U is None or U <= 1:
        return Fraction(1)
    return 1 / U


def multiplier(g: Polynomial, lam, k: int) -> Polynomial:
    """``(1 - lam*g)**(2k) * g``."""
    return (1 - to_fraction(lam) * g) ** (2 * k) * g


def build_fk(f: Polynomial, problem: ProblemSpec, lam, k: int) -> Polynomial:
    if k < 0:
        raise ValueError("k must be >= 0")
    out = f
    for _, g in problem.constraints:
        out = out - multiplier(g, lam, k)
    return out


def find_k(
    f: Polynomial,
    problem: ProblemSpec,
    lam,
    k_max: int = DEFAULT_K_MAX,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    k_min: int = 1,
) -> tuple[int, Polynomial, PositivityReport]:
    """Smallest ``k`` in ``k_min..k_max`` whose remainder is certified positive on the region."""
    region = problem.region.restrict(sorted(problem.pattern.union()))
    trajectory = []
    for k in range(k_min, k_max + 1):
        fk = build_fk(f, problem, lam, k)
        rep = certify_positive(fk, region, 0, depth_cap)
        trajectory.append((k, rep.lower_bound, rep.verdict))
        log.info("find_k: k=%d verdict=%s lower=%s", k, rep.verdict, float(rep.lower_bound))
        if rep.ok:
            # a tighter bound is cheap to try and widens the split budget later
            sharp = certify_positive(fk, region, SHARPEN * rep.witness_value, depth_cap, max_cells=SHARPEN_CELLS)
            if sharp.ok and sharp.lower_bound > rep.lower_bound:
                rep = sharp
            return k, fk, rep
        if not problem.constraints:
            # f_k does not depend on k
            if rep.verdict == DISPROVED:
                raise FindKError(f"f takes the value {rep.witness_value} on the region", trajectory)
            break
    raise FindKError(
        f"no k <= {k_max} gives a certifiably positive remainder (inconclusive: larger k or a smaller region may work)",
        trajectory,
    )


def certify(
    problem: ProblemSpec,
    config: SplitConfig | None = None,
    k_max: int = DEFAULT_K_MAX,
    k_min: int = 1,
) -> Certificate:
    """Run choose_lambda -> find_k -> split_many and assemble a verified certificate."""
    config = config or SplitConfig()
    n = problem.nvars
    region = problem.region
    lam = choose_lambda([g for _, g in problem.constraints], region)
    f = problem.f
    k_start = k_min
    while True:
        k, fk, rep = find_k(f, problem, lam, k_max, config.depth_cap, k_start)
        terms = [MultiplierTerm(j, idx, g, multiplier(g, lam, k)) for idx, (j, g) in enumerate(problem.constraints)]
        # subtract multipliers block-locally so every residual summand stays in its block
        residual = []
        for j in range(len(problem.pattern)):
            rj = problem.block_f(j)
            for t in terms:
                if t.block == j:
                    rj = rj - t.term
            residual.append(rj)
        per_block = assign_summands(residual, problem.pattern)
        try:
            split = split_many(per_block, problem.pattern, region, config, lower_bound=rep.lower_bound)
            break
        except SplitError as exc:
            # f_k <= f_{k+1} pointwise, so a larger k can only widen the margin
            if k >= k_max or not problem.constraints:
                raise
            log.info("certify: split failed at k=%d (%s); trying k=%d", k, exc, k + 1)
            k_start = k + 1
    remainders = [Remainder(j, h, m) for j, (h, m) in enumerate(zip(split.h, split.margins))]
    cert = Certificate(lam, k, terms, remainders, split.transfers, rep)
    if cert.rhs(n) != f:  # pragma: no cover - exact by construction
        raise AssertionError("assembled certificate does not reproduce f")
    return cert


@dataclass
class VerificationReport:
    checks: dict[str, tuple[bool, str]] = field(default_factory=dict)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks[name] = (bool(ok), detail)

    @property
    def ok(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def failures(self) -> list[str]:
        return [n for n, (ok, _) in self.checks.items() if not ok]

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": {n: {"pass": ok, "detail": d} for n, (ok, d) in self.checks.items()}}


def verify_certificate(
    cert: Certificate,
    problem: ProblemSpec,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> VerificationReport:
    """Re-check a certificate from scratch; failures are entries, not exceptions."""
    rep = VerificationReport()
    n = problem.nvars
    diff = cert.rhs(n) - problem.f
    rep.add("identity", diff.is_zero(), "exact" if diff.is_zero() else f"{len(diff)} nonzero coefficients in rhs - f")
    rep.add("lambda_range", 0 < cert.lam <= 1, f"lambda = {cert.lam}")
    rep.add("k_positive", cert.k >= 1, f"k = {cert.k}")

    expected = {idx: (j, g) for idx, (j, g) in enumerate(problem.constraints)}
    seen = set()
    bad = []
    for t in cert.multiplier_terms:
        if t.index not in expected or expected[t.index] != (t.block, t.g) or t.term != multiplier(t.g, cert.lam, cert.k):
            bad.append(t.index + 1)
        seen.add(t.index)
    missing = sorted(set(expected) - seen)
    rep.add(
        "multiplier_terms",
        not bad and not missing,
        f"mismatched: {bad}, missing: {[m + 1 for m in missing]}" if bad or missing else f"{len(seen)} terms re-expanded",
    )

    confined = []
    for t in cert.multiplier_terms:
        if not 0 <= t.block < len(problem.pattern) or not t.term.support_vars() <= problem.pattern.blocks[t.block]:
            confined.append(f"term {t.index + 1}")
    for r in cert.remainders:
        if not 0 <= r.block < len(problem.pattern) or not r.h.support_vars() <= problem.pattern.blocks[r.block]:
            confined.append(f"h{r.block + 1}")
    rep.add("block_confinement", not confined, ", ".join(confined) or "all components block-local")

    region = problem.region
    for r in cert.remainders:
        if not 0 <= r.block < len(problem.pattern):
            rep.add(f"h{r.block + 1}_positive", False, "block out of range")
            continue
        sub = region.restrict(sorted(problem.pattern.blocks[r.block]))
        try:
            pr = certify_positive(r.h, sub, 0, depth_cap)
        except ValueError as exc:
            rep.add(f"h{r.block + 1}_positive", False, str(exc))
            continue
        rep.add(f"h{r.block + 1}_positive", pr.ok, f"{pr.verdict}, lower bound {float(pr.lower_bound):.6g}")
    return rep
