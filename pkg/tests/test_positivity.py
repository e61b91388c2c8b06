import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sampled_min, univariate_min
from sparsepos.poly import Box, DimensionError, Polynomial
from sparsepos.positivity import (
    DISPROVED,
    INCONCLUSIVE,
    POSITIVE,
    PositivityReport,
    bernstein_coefficients,
    bernstein_lower_bound,
    bernstein_upper_bound,
    certify_positive,
    grid_min,
    lipschitz_bounds,
)
from strategies import polynomials

(X,) = Polynomial.variables(1)
UNIT = Box({1: (0, 1)})
SYM = Box({1: (-1, 1)})


def bernstein_oracle(coeffs: dict[int, Fraction], lo: Fraction, hi: Fraction) -> list[Fraction]:
    """Univariate Bernstein coefficients by substitution x = lo + (hi-lo) t."""
    d = max(coeffs)
    w = hi - lo
    a = [Fraction(0)] * (d + 1)
    for e, c in coeffs.items():
        for j in range(e + 1):
            a[j] += c * math.comb(e, j) * lo ** (e - j) * w**j
    return [sum(Fraction(math.comb(i, j), math.comb(d, j)) * a[j] for j in range(i + 1)) for i in range(d + 1)]


def test_linear_on_unit_interval():
    assert bernstein_lower_bound(X, UNIT, 0) == 0
    assert list(bernstein_coefficients(X, UNIT)[1]) == [0, 1]


def test_square_on_symmetric_interval():
    assert list(bernstein_coefficients(X**2, SYM)[1]) == [1, -1, 1]
    assert bernstein_lower_bound(X**2, SYM, 0) == -1
    assert bernstein_lower_bound(X**2, SYM, 1) >= Fraction(-1, 4)
    assert bernstein_lower_bound(X**2, SYM, 6) <= 0


def test_constant():
    assert bernstein_lower_bound(Polynomial.constant(5, 2), Box.cube([1, 2], -3, 7), 3) == 5


def test_point_interval_gives_exact_value():
    b = Box({1: (Fraction(1, 2), Fraction(1, 2))})
    assert bernstein_lower_bound(X**2 + X, b, 0) == Fraction(3, 4)


def test_missing_interval():
    Y = Polynomial.variables(2)
    with pytest.raises(DimensionError):
        bernstein_lower_bound(Y[1], Box({1: (0, 1)}))


def test_negative_depth():
    with pytest.raises(ValueError):
        bernstein_lower_bound(X, UNIT, -1)


@pytest.mark.parametrize(
    "coeffs,lo,hi",
    [
        ({0: 1, 1: -3, 3: 2}, Fraction(-1), Fraction(2)),
        ({2: Fraction(1, 3), 4: -1}, Fraction(-1, 2), Fraction(3, 4)),
        ({1: 5}, Fraction(0), Fraction(1)),
    ],
)
def test_coefficients_match_oracle(coeffs, lo, hi):
    p = sum((Fraction(c) * X**e for e, c in coeffs.items()), Polynomial.zero(1))
    got = list(bernstein_coefficients(p, Box({1: (lo, hi)}))[1])
    assert got == bernstein_oracle({e: Fraction(c) for e, c in coeffs.items()}, lo, hi)


def test_upper_bound():
    # coefficients {0, 2, 0}: the undivided bound is 2, one split makes it exact
    assert bernstein_upper_bound(1 - X**2, SYM, 0) == 2
    assert bernstein_upper_bound(1 - X**2, SYM, 1) == 1


def test_grid_min_examples():
    g = grid_min(X**2, SYM, 2)
    assert g.approx_min == 0 and g.argmin[1] == 0
    g = grid_min(X, UNIT, 5)
    assert g.approx_min == 0 and g.certified_lower <= 0
    g = grid_min((X - Fraction(1, 3)) ** 2, UNIT, 3)
    assert g.approx_min == 0 and g.argmin[1] == Fraction(1, 3)


def test_grid_min_rejects_zero_resolution():
    with pytest.raises(ValueError):
        grid_min(X, UNIT, 0)


def test_lipschitz_bounds():
    assert lipschitz_bounds(X**2, SYM)[1] == 2


def test_certify_examples():
    rep = certify_positive(X**2 + Fraction(1, 2), SYM)
    assert rep.ok and rep.lower_bound >= Fraction(1, 2) - Fraction(1, 1000)
    rep = certify_positive(X**2, SYM)
    assert rep.verdict in (DISPROVED, INCONCLUSIVE)
    assert rep.witness_value <= 0 or rep.verdict == INCONCLUSIVE
    rep = certify_positive(Polynomial.constant(-1, 1), SYM)
    assert rep.verdict == DISPROVED and rep.witness_value == -1


def test_certify_margin():
    assert certify_positive(X**2 + 1, SYM, margin=1).ok
    assert not certify_positive(X**2 + 1, SYM, margin=Fraction(3, 2)).ok
    with pytest.raises(ValueError):
        certify_positive(X, UNIT, margin=-1)


def test_certify_inconclusive_at_cap():
    # min 1e-6 at an irrational-free interior point needs deep refinement
    p = (X - Fraction(1, 3)) ** 2 + Fraction(1, 10**6)
    rep = certify_positive(p, SYM, depth_cap=1)
    assert rep.verdict == INCONCLUSIVE
    assert certify_positive(p, SYM, depth_cap=30).ok


def test_report_json_roundtrip():
    rep = certify_positive(X**2 + 1, SYM, with_upper=True)
    back = PositivityReport.from_json(rep.to_json())
    assert back == rep


def test_report_invariants():
    rep = certify_positive(3 * X**3 - X + 1, SYM)
    pt = [rep.witness_point[1]]
    assert rep.lower_bound <= (3 * X**3 - X + 1).eval(pt)
    if rep.verdict == POSITIVE:
        assert rep.lower_bound > 0


boxes = st.tuples(st.integers(-3, 1), st.integers(1, 3)).map(lambda t: (Fraction(t[0], 2), Fraction(t[0], 2) + Fraction(t[1], 2)))


@settings(max_examples=60, deadline=None)
@given(polynomials(nvars=2, max_degree=4), boxes, boxes, st.integers(0, 3))
def test_bernstein_soundness(p, b1, b2, depth):
    box = Box({1: b1, 2: b2})
    assert float(bernstein_lower_bound(p, box, depth)) <= sampled_min(p, box, 41) + 1e-12


@settings(max_examples=40, deadline=None)
@given(polynomials(nvars=2, max_degree=4), boxes, boxes)
def test_bernstein_monotone_in_depth(p, b1, b2):
    box = Box({1: b1, 2: b2})
    bounds = [bernstein_lower_bound(p, box, d) for d in range(4)]
    assert bounds == sorted(bounds)


@settings(max_examples=60, deadline=None)
@given(polynomials(nvars=2, max_degree=3), boxes, boxes, st.integers(1, 6))
def test_grid_min_ordering(p, b1, b2, res):
    box = Box({1: b1, 2: b2})
    g = grid_min(p, box, res)
    s = sampled_min(p, box, 61)
    assert float(g.certified_lower) <= s + 1e-12
    assert s <= float(g.approx_min) + 1e-12


@settings(max_examples=60, deadline=None)
@given(polynomials(nvars=2, max_degree=4), boxes, boxes, st.sampled_from([0, Fraction(1, 4), 1]))
def test_certify_never_wrong(p, b1, b2, margin):
    box = Box({1: b1, 2: b2})
    rep = certify_positive(p, box, margin=margin, depth_cap=6)
    if rep.ok:
        assert sampled_min(p, box, 41) >= float(margin) - 1e-12
        assert rep.lower_bound >= margin and rep.lower_bound > 0
    if rep.verdict == DISPROVED:
        x = [rep.witness_point.get(v, 0) for v in (1, 2)]
        assert p.eval(x) == rep.witness_value
        assert rep.witness_value < margin or rep.witness_value <= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(1, 4))
def test_quadratic_convergence(b, c, a):
    # a x^2 + b x + c on [-1, 1]
    p = a * X**2 + b * X + c
    true = univariate_min({0: Fraction(c), 1: Fraction(b), 2: Fraction(a)}, -1.0, 1.0)
    assert abs(float(bernstein_lower_bound(p, SYM, 8)) - true) <= 1e-3
