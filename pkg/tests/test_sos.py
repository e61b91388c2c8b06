from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from problems import feasible_samples
from sparsepos.certificate import ProblemSpec
from sparsepos.poly import Box, Monomial, Polynomial
from sparsepos.sos import (
    SOSDecomposition,
    SOSError,
    SOSInfeasible,
    ball_polynomial,
    cassier_certificate,
    gram_module,
    monomial_basis,
    sos_decompose,
    sos_product,
    sos_sum,
    sparse_putinar,
)
from sparsepos.sparsity import SparsityPattern

(X,) = Polynomial.variables(1)
ONE = Monomial()


def test_perfect_square():
    d = sos_decompose(X**2 + 2 * X + 1)
    assert d.basis == [ONE, Monomial(((1, 1),))]
    assert (d.gram == np.array([[1, 1], [1, 1]], dtype=object)).all()
    assert d.polynomial() == (X + 1) ** 2


def test_sum_of_two_squares():
    d = sos_decompose(X**2 + 1)
    assert (d.gram == np.array([[1, 0], [0, 1]], dtype=object)).all()
    assert d.margin > 0 and d.check()


def test_negative_constant_infeasible():
    with pytest.raises(SOSInfeasible):
        sos_decompose(Polynomial.constant(-1, 1))


def test_odd_degree_infeasible():
    with pytest.raises(SOSInfeasible):
        sos_decompose(X**3 + 1)


def test_motzkin_is_not_sos():
    x, y = Polynomial.variables(2)
    motzkin = x**4 * y**2 + x**2 * y**4 - 3 * x**2 * y**2 + 1
    with pytest.raises(SOSInfeasible):
        sos_decompose(motzkin)


def test_decomposition_invariants():
    x, y = Polynomial.variables(2)
    f = (x - y) ** 2 + (x * y - 1) ** 2 + Fraction(1, 3)
    d = sos_decompose(f)
    assert d.residual_norm <= 1e-6
    assert d.witness_error() <= 1e-9
    assert d.margin >= 0
    n = len(d.basis)
    assert all(d.gram[i, j] == d.gram[j, i] for i in range(n) for j in range(n))
    pts = np.random.default_rng(0).uniform(-2, 2, size=(200, 2))
    assert np.allclose(d.eval_float(pts), f.eval_float(pts), atol=1e-8)


def test_asymmetric_gram_rejected():
    with pytest.raises(ValueError):
        SOSDecomposition(1, [ONE, Monomial(((1, 1),))], np.array([[1, 0], [1, 1]], dtype=object))


def test_sum_and_product():
    a = SOSDecomposition.square(X + 1)
    b = SOSDecomposition.square(X - 2)
    assert sos_sum([a, b], 1).polynomial() == (X + 1) ** 2 + (X - 2) ** 2
    assert sos_product(a, b).polynomial() == ((X + 1) * (X - 2)) ** 2
    assert sos_product(a, SOSDecomposition.zero(1)).polynomial().is_zero()


def test_gram_module_requires_unit_generator():
    with pytest.raises(ValueError):
        gram_module(X**2, [X], [[ONE]])


def test_monomial_basis():
    assert len(monomial_basis([1, 2], 2)) == 6
    assert monomial_basis([3], 0) == [ONE]


def test_cassier_hand_example():
    bc = cassier_certificate(2 - X**2, 1, degrees=(2, 0))
    assert bc.residual_norm <= 1e-6
    assert bc.sigma.margin >= 0 and bc.tau.margin >= 0
    assert bc.sigma.polynomial() + bc.tau.polynomial() * (1 - X**2) == 2 - X**2


def test_cassier_trivial_cases():
    bc = cassier_certificate(X**2 + 1, 3)
    assert bc.sigma.polynomial() == X**2 + 1 and bc.tau.polynomial().is_zero()
    bc = cassier_certificate(Polynomial.constant(1, 1), Fraction(1, 2))
    assert bc.sigma.polynomial() == 1 and bc.tau.polynomial().is_zero()


def test_cassier_needs_ball():
    # positive on the unit ball, not globally SOS
    bc = cassier_certificate(X + 2, 1)
    assert bc.residual_norm <= 1e-6
    assert bc.residual.is_zero()


def test_cassier_failure():
    # negative at x = 1 inside the ball
    with pytest.raises((SOSInfeasible, SOSError)):
        cassier_certificate(Fraction(1, 2) - X**2, 1, degrees=[(2, 0), (4, 2)])


def test_cassier_bad_radius():
    with pytest.raises(ValueError):
        cassier_certificate(X + 2, 0)


def test_ball_polynomial():
    x, y = Polynomial.variables(2)
    assert ball_polynomial(4, [1, 2], 2) == 4 - x**2 - y**2


def test_membership_univariate():
    P = ProblemSpec([(0, X + 2)], [(0, 1 - X**2)], SparsityPattern([{1}], 1), Box({1: (-1, 1)}))
    m = sparse_putinar(P)
    assert m.certificate.k == 1
    assert m.residual_norm <= 1e-6
    assert m.ok
    pts = np.random.default_rng(1).uniform(-1, 1, size=(500, 1))
    assert np.allclose(m.eval_rhs(pts), (X + 2).eval_float(pts), atol=1e-5)


def test_membership_constant():
    P = ProblemSpec([(0, Polynomial.constant(1, 1))], [(0, 1 - X**2)], SparsityPattern([{1}], 1), Box({1: (-1, 1)}))
    m = sparse_putinar(P)
    assert m.blocks[0].sigma0.polynomial() == 1
    assert all(s.polynomial().is_zero() for _, _, s in m.blocks[0].multipliers)


def test_membership_two_blocks():
    Y = Polynomial.variables(3)
    P = ProblemSpec(
        [(0, Y[0] ** 2 + Y[1] + 2), (1, Y[2] ** 2 - Y[1])],
        [(0, 1 - Y[0] ** 2 - Y[1] ** 2), (1, 1 - Y[1] ** 2 - Y[2] ** 2)],
        SparsityPattern([{1, 2}, {2, 3}], 3),
        Box.cube([1, 2, 3], -1, 1),
    )
    m = sparse_putinar(P)
    assert m.ok and m.residual_norm <= 1e-6
    for b, blk in zip(m.blocks, P.pattern.blocks):
        assert b.polynomial().support_vars() <= blk
    pts = feasible_samples(P, 400)
    assert np.allclose(m.eval_rhs(pts), P.f.eval_float(pts), atol=1e-5)
    for b in m.blocks:
        for s in b.sos_parts():
            assert (s.eval_float(pts) >= -1e-9).all()


def test_membership_needs_radius():
    Y = Polynomial.variables(2)
    P = ProblemSpec([(0, Y[0] + 3)], [(0, 1 - Y[0] ** 2)], SparsityPattern([{1, 2}], 2), Box.cube([1, 2], -1, 1))
    with pytest.raises(SOSError):
        sparse_putinar(P)
    with pytest.raises(ValueError):
        sparse_putinar(P, radii=[1, 1])


def test_membership_json():
    import json

    P = ProblemSpec([(0, X + 2)], [(0, 1 - X**2)], SparsityPattern([{1}], 1), Box({1: (-1, 1)}))
    doc = json.loads(json.dumps(sparse_putinar(P).to_json()))
    assert doc["ok"] and doc["k"] == 1


def _psd_2x2(a, b, c) -> bool:
    return a >= 0 and c >= 0 and a * c - b * b >= 0


@settings(max_examples=60, deadline=None)
@given(st.integers(-4, 4), st.integers(-6, 6), st.integers(-4, 4))
def test_infeasibility_matches_bruteforce(a, b, c):
    # on the basis {1, X} the Gram matrix of a + bX + cX^2 is forced
    f = a + b * X + c * X**2
    feasible = _psd_2x2(Fraction(a), Fraction(b, 2), Fraction(c))
    if c == 0 and b == 0:
        feasible = a >= 0
    try:
        d = sos_decompose(f, basis_degree=1)
    except SOSInfeasible:
        assert not feasible
        return
    assert feasible
    assert d.residual_norm <= 1e-6
    if d.basis:
        assert np.linalg.eigvalsh(np.array(d.gram, dtype=float)).min() >= -1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(-4, 4))
def test_constant_infeasibility(a):
    f = Polynomial.constant(a, 1)
    if a < 0:
        with pytest.raises(SOSInfeasible):
            sos_decompose(f)
    else:
        assert sos_decompose(f).polynomial() == f
