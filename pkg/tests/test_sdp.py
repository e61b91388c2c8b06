import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsepos.sdp import SDPInfeasible, interior_point, solve_sdp


def test_one_by_one():
    res = solve_sdp([[np.array([[1.0]])]], [2.0], [1])
    assert np.allclose(res.X[0], [[2.0]], atol=1e-7)


def test_trace_zero_forces_zero():
    res = solve_sdp([[np.eye(2)]], [0.0], [2])
    assert np.allclose(res.X[0], 0, atol=1e-7)


def test_gram_of_perfect_square():
    A = [[np.array([[1.0, 0], [0, 0]])], [np.array([[0, 0], [0, 1.0]])], [np.array([[0, 1.0], [1.0, 0]])]]
    res = solve_sdp(A, [1, 1, 2], [2])
    assert np.allclose(res.X[0], [[1, 1], [1, 1]], atol=1e-7)


def test_infeasible_with_farkas_vector():
    A = [[np.array([[1.0, 0], [0, 0]])], [np.array([[0, 0], [0, 1.0]])], [np.array([[0, 1.0], [1.0, 0]])]]
    b = np.array([1.0, 1.0, 4.0])  # would need |m12| = 2 > 1
    with pytest.raises(SDPInfeasible) as exc:
        solve_sdp(A, b, [2])
    y = exc.value.y
    S = sum(yi * a[0] for yi, a in zip(y, A))
    assert np.linalg.eigvalsh(S).min() >= -1e-6
    assert b @ y < 0


def test_block_size_cap():
    with pytest.raises(ValueError):
        solve_sdp([[np.eye(3)]], [1.0], [3], max_size=2)


def test_interior_point_lp_only():
    # minimize x1 + 2 x2 subject to x1 + x2 = 1, x >= 0
    _, xl, y, _, _, info = interior_point([], [], np.array([1.0]), np.array([1.0, 2.0]), np.array([[1.0, 1.0]]))
    assert info["status"] == "optimal"
    assert np.allclose(xl, [1, 0], atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_recovers_feasible_point(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    X0 = B @ B.T + 0.1 * np.eye(n)
    A = []
    for _ in range(n):
        M = rng.normal(size=(n, n))
        A.append([(M + M.T) / 2])
    b = [float(np.sum(a[0] * X0)) for a in A]
    res = solve_sdp(A, b, [n])
    X = res.X[0]
    assert np.linalg.eigvalsh(X).min() >= -1e-8
    assert np.allclose([np.sum(a[0] * X) for a in A], b, atol=1e-6)
    assert res.margin >= 0
