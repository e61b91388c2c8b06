"""Exact sparse multivariate polynomials over the rationals.

Variables are named by 1-based indices ``1..nvars``.  A :class:`Monomial` is a
sorted tuple of ``(var, exp)`` pairs with positive exponents; a
:class:`Polynomial` maps monomials to nonzero :class:`~fractions.Fraction`
coefficients.  Both are immutable.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Monomial",
    "Polynomial",
    "Box",
    "DimensionError",
    "to_fraction",
    "rationalize",
    "fraction_str",
]


class DimensionError(ValueError):
    """Operands live in different ambient dimensions."""


def to_fraction(x) -> Fraction:
    """Exact conversion; floats are rationalized with denominator <= 2**53."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x)).limit_denominator(2**53)
    if isinstance(x, np.integer):
        return Fraction(int(x))
    raise TypeError(f"cannot convert {x!r} to a rational")


def rationalize(x: float, max_den: int = 2**40, snap_den: int = 4096, snap_tol: float = 1e-10) -> Fraction:
    """Round a float to a rational, preferring small denominators when close."""
    x = float(x)
    small = Fraction(x).limit_denominator(snap_den)
    if abs(float(small) - x) <= snap_tol * max(1.0, abs(x)):
        return small
    return Fraction(x).limit_denominator(max_den)


def fraction_str(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


class Monomial(tuple):
    """Sorted tuple of ``(var, exp)`` pairs, every ``exp > 0``."""

    __slots__ = ()

    def __new__(cls, pairs: Iterable[tuple[int, int]] = ()):
        acc: dict[int, int] = {}
        for v, e in pairs:
            if e < 0:
                raise ValueError("negative exponent")
            if e:
                acc[v] = acc.get(v, 0) + e
        return tuple.__new__(cls, sorted(acc.items()))

    @classmethod
    def _raw(cls, pairs: tuple) -> "Monomial":
        return tuple.__new__(cls, pairs)

    @classmethod
    def from_dense(cls, exps: Sequence[int]) -> "Monomial":
        return cls((i + 1, int(e)) for i, e in enumerate(exps))

    @property
    def degree(self) -> int:
        return sum(e for _, e in self)

    @property
    def vars(self) -> frozenset[int]:
        return frozenset(v for v, _ in self)

    def exp(self, var: int) -> int:
        for v, e in self:
            if v == var:
                return e
        return 0

    def dense(self, nvars: int) -> list[int]:
        out = [0] * nvars
        for v, e in self:
            out[v - 1] = e
        return out

    def __mul__(self, other: "Monomial") -> "Monomial":
        if not self:
            return other
        if not other:
            return self
        a, b = dict(self), other
        for v, e in b:
            a[v] = a.get(v, 0) + e
        return Monomial._raw(tuple(sorted(a.items())))

    def divides(self, other: "Monomial") -> bool:
        o = dict(other)
        return all(o.get(v, 0) >= e for v, e in self)

    def grlex_key(self, nvars: int):
        return (self.degree, tuple(self.dense(nvars)))

    def __repr__(self) -> str:
        if not self:
            return "1"
        return "*".join(f"X{v}" if e == 1 else f"X{v}^{e}" for v, e in self)


ONE = Monomial()


class Polynomial:
    """Immutable polynomial in ``nvars`` variables with rational coefficients."""

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Monomial, object] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        self.nvars = int(nvars)
        clean: dict[Monomial, Fraction] = {}
        for m, c in (terms or {}).items():
            if not isinstance(m, Monomial):
                m = Monomial(m)
            c = to_fraction(c)
            if c == 0:
                continue
            for v, _ in m:
                if not 1 <= v <= nvars:
                    raise DimensionError(f"variable X{v} outside 1..{nvars}")
            clean[m] = clean.get(m, 0) + c
        self._terms = {m: c for m, c in clean.items() if c != 0}
        self._hash = None

    @classmethod
    def _wrap(cls, nvars: int, terms: dict) -> "Polynomial":
        p = object.__new__(cls)
        p.nvars = nvars
        p._terms = terms
        p._hash = None
        return p

    # constructors ------------------------------------------------------
    @classmethod
    def constant(cls, c, nvars: int) -> "Polynomial":
        return cls(nvars, {ONE: c})

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls._wrap(nvars, {})

    @classmethod
    def var(cls, i: int, nvars: int) -> "Polynomial":
        return cls(nvars, {Monomial([(i, 1)]): 1})

    @classmethod
    def variables(cls, nvars: int) -> list["Polynomial"]:
        return [cls.var(i, nvars) for i in range(1, nvars + 1)]

    @classmethod
    def from_dense(cls, nvars: int, terms: Mapping[Sequence[int], object]) -> "Polynomial":
        return cls(nvars, {Monomial.from_dense(e): c for e, c in terms.items()})

    # basic access ----------------------------------------------------------
    @property
    def terms(self) -> dict[Monomial, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, m: Monomial) -> Fraction:
        return self._terms.get(m, Fraction(0))

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not m for m in self._terms)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((m.degree for m in self._terms), default=-1)

    def degree_in(self, var: int) -> int:
        return max((m.exp(var) for m in self._terms), default=0)

    def support_vars(self) -> frozenset[int]:
        out: set[int] = set()
        for m in self._terms:
            out.update(v for v, _ in m)
        return frozenset(out)

    def max_abs_coeff(self) -> Fraction:
        return max((abs(c) for c in self._terms.values()), default=Fraction(0))

    def sorted_terms(self) -> list[tuple[Monomial, Fraction]]:
        """Terms in descending graded-lexicographic order."""
        n = self.nvars
        return sorted(self._terms.items(), key=lambda t: t[0].grlex_key(n), reverse=True)

    # arithmetic ----------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise DimensionError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
            return other
        return Polynomial.constant(to_fraction(other), self.nvars)

    def __add__(self, other) -> "Polynomial":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Polynomial._wrap(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._wrap(self.nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            try:
                c = to_fraction(other)
            except TypeError:
                return NotImplemented
            if c == 0:
                return Polynomial.zero(self.nvars)
            return Polynomial._wrap(self.nvars, {m: c * a for m, a in self._terms.items()})
        other = self._coerce(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 * m2
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._wrap(self.nvars, {m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Polynomial":
        return self * (1 / to_fraction(other))

    def __pow__(self, e: int) -> "Polynomial":
        if not isinstance(e, int) or e < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(1, self.nvars)
        base = self
        while e:
            if e & 1:
                result = result * base
            e >>= 1
            if e:
                base = base * base
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self.nvars == other.nvars and self._terms == other._terms
        try:
            return self == Polynomial.constant(to_fraction(other), self.nvars)
        except TypeError:
            return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    # evaluation ----------------------------------------------------------
    def __call__(self, x: Sequence) -> Fraction:
        return self.eval(x)

    def eval(self, x: Sequence) -> Fraction:
        """Exact value at a point with ``nvars`` coordinates."""
        if len(x) != self.nvars:
            raise DimensionError(f"point has {len(x)} coordinates, expected {self.nvars}")
        xs = [to_fraction(v) for v in x]
        total = Fraction(0)
        for m, c in self._terms.items():
            t = c
            for v, e in m:
                t *= xs[v - 1] ** e
            total += t
        return total

    def eval_float(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation at rows of ``pts`` (shape ``(N, nvars)``)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        cache: dict[tuple[int, int], np.ndarray] = {}
        for m, c in self._terms.items():
            t = np.full(pts.shape[0], float(c))
            for v, e in m:
                key = (v, e)
                if key not in cache:
                    cache[key] = pts[:, v - 1] ** e
                t = t * cache[key]
            out += t
        return out

    def diff(self, var: int) -> "Polynomial":
        out = {}
        for m, c in self._terms.items():
            e = m.exp(var)
            if e:
                out[Monomial((v, ee - (v == var)) for v, ee in m)] = c * e
        return Polynomial(self.nvars, out)

    def subs(self, values: Mapping[int, object]) -> "Polynomial":
        """Substitute exact values for some variables (ambient dimension kept)."""
        vals = {v: to_fraction(x) for v, x in values.items()}
        out: dict[Monomial, Fraction] = {}
        for m, c in self._terms.items():
            keep = []
            for v, e in m:
                if v in vals:
                    c = c * vals[v] ** e
                else:
                    keep.append((v, e))
            mm = Monomial._raw(tuple(keep))
            out[mm] = out.get(mm, 0) + c
        return Polynomial(self.nvars, out)

    def restrict_to(self, block: Iterable[int]) -> "Polynomial":
        """The part of ``self`` whose monomials only use variables in ``block``."""
        b = set(block)
        return Polynomial._wrap(self.nvars, {m: c for m, c in self._terms.items() if all(v in b for v, _ in m)})

    # serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "terms": [{"coeff": fraction_str(c), "exps": m.dense(self.nvars)} for m, c in self.sorted_terms()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Polynomial":
        n = int(data["nvars"])
        terms: dict[Monomial, Fraction] = {}
        for t in data.get("terms", []):
            exps = t["exps"]
            if len(exps) != n:
                raise DimensionError(f"exponent array of length {len(exps)}, expected {n}")
            if any(int(e) != e or e < 0 for e in exps):
                raise ValueError(f"bad exponents {exps}")
            m = Monomial.from_dense([int(e) for e in exps])
            terms[m] = terms.get(m, 0) + to_fraction(t["coeff"])
        return cls(n, terms)

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            if not m:
                parts.append(str(c))
            elif c == 1:
                parts.append(repr(m))
            elif c == -1:
                parts.append(f"-{m!r}")
            else:
                parts.append(f"{c}*{m!r}")
        return " + ".join(parts).replace("+ -", "- ")


class Box:
    """Product of closed intervals, keyed by variable index."""

    __slots__ = ("_iv",)

    def __init__(self, intervals: Mapping[int, tuple]):
        iv = {}
        for v, (lo, hi) in sorted(intervals.items()):
            lo, hi = to_fraction(lo), to_fraction(hi)
            if lo > hi:
                raise ValueError(f"empty interval for X{v}: [{lo}, {hi}]")
            iv[int(v)] = (lo, hi)
        self._iv = iv

    @classmethod
    def cube(cls, variables: Iterable[int], lo, hi) -> "Box":
        return cls({v: (lo, hi) for v in variables})

    @classmethod
    def from_bounds(cls, lo: Sequence, hi: Sequence) -> "Box":
        if len(lo) != len(hi):
            raise ValueError("lo/hi length mismatch")
        return cls({i + 1: (a, b) for i, (a, b) in enumerate(zip(lo, hi))})

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(self._iv)

    def __getitem__(self, v: int) -> tuple[Fraction, Fraction]:
        return self._iv[v]

    def __contains__(self, v: int) -> bool:
        return v in self._iv

    def items(self):
        return self._iv.items()

    def restrict(self, variables: Iterable[int]) -> "Box":
        try:
            return Box({v: self._iv[v] for v in variables})
        except KeyError as exc:
            raise DimensionError(f"box has no interval for X{exc.args[0]}") from None

    def is_common_interval(self) -> bool:
        return len(set(self._iv.values())) <= 1

    def widths(self) -> dict[int, Fraction]:
        return {v: hi - lo for v, (lo, hi) in self._iv.items()}

    def center(self) -> dict[int, Fraction]:
        return {v: (lo + hi) / 2 for v, (lo, hi) in self._iv.items()}

    def grid(self, resolution: int, variables: Sequence[int] | None = None) -> np.ndarray:
        """Float uniform grid with ``resolution`` cells per axis, shape ``(N, k)``."""
        vs = list(self._iv) if variables is None else list(variables)
        axes = [np.linspace(float(self._iv[v][0]), float(self._iv[v][1]), resolution + 1) for v in vs]
        if not axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Box) and self._iv == other._iv

    def __repr__(self) -> str:
        return "Box(" + ", ".join(f"X{v}∈[{lo}, {hi}]" for v, (lo, hi) in self._iv.items()) + ")"

    def to_json(self, nvars: int | None = None) -> dict:
        vs = range(1, nvars + 1) if nvars is not None else self._iv
        return {"lo": [fraction_str(self._iv[v][0]) for v in vs], "hi": [fraction_str(self._iv[v][1]) for v in vs]}
