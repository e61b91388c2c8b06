"""Small dense semidefinite programs by primal-dual path following.

The core solver handles the standard form

    minimize <C, X>  subject to  <A_i, X> = b_i,  X in K

where ``K`` is a product of PSD cones and one nonnegative orthant.  It uses
the HKM search direction with a Mehrotra predictor-corrector step.

:func:`solve_sdp` wraps it for feasibility problems: it looks for
``X = Y + t*I`` with ``Y`` PSD and the common margin ``t`` as large as
possible.  That problem is always feasible, and ``t < 0`` at the optimum means
no PSD solution exists; the dual vector ``y`` then satisfies
``sum_i y_i A_i >= 0`` and ``b . y < 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

__all__ = ["SDPResult", "SDPInfeasible", "SDPError", "interior_point", "solve_sdp", "MAX_BASIS"]

log = logging.getLogger(__name__)

MAX_BASIS = 60


class SDPError(RuntimeError):
    """The interior-point method did not converge."""


class SDPInfeasible(RuntimeError):
    """No PSD matrix satisfies the equalities; ``y`` is a Farkas certificate."""

    def __init__(self, message: str, y: np.ndarray, margin: float):
        super().__init__(message)
        self.y = y
        self.margin = margin


@dataclass
class SDPResult:
    X: list[np.ndarray]
    y: np.ndarray
    margin: float = 0.0
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    gap: float = 0.0
    lp: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest ``a`` with ``X + a dX`` PSD (``X`` positive definite)."""
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    return np.inf if not neg.any() else float(np.min(-x[neg] / dx[neg]))


def interior_point(
    C: Sequence[np.ndarray],
    A: Sequence[np.ndarray],
    b: np.ndarray,
    c_lp: np.ndarray | None = None,
    A_lp: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 100,
):
    """Solve the standard-form problem.

    ``C[k]`` is the ``n_k x n_k`` cost block and ``A[k]`` the stacked
    constraint blocks of shape ``(m, n_k, n_k)``.  The optional orthant has
    cost ``c_lp`` and constraint matrix ``A_lp`` of shape ``(m, n_lp)``.
    Returns ``(X blocks, x_lp, y, Z blocks, z_lp, info)``.
    """
    b = np.asarray(b, dtype=float)
    m = b.shape[0]
    nl = 0 if c_lp is None else len(c_lp)
    c_lp = np.zeros(0) if c_lp is None else np.asarray(c_lp, float)
    A_lp = np.zeros((m, 0)) if A_lp is None else np.asarray(A_lp, float)
    nu = sum(len(c) for c in C) + nl

    def op(Xs, xl):
        out = A_lp @ xl
        for Ak, Xk in zip(A, Xs):
            out = out + np.einsum("mij,ij->m", Ak, Xk)
        return out

    def adj(y):
        return [np.einsum("m,mij->ij", y, Ak) for Ak in A], A_lp.T @ y

    normA = max([np.abs(Ak).max() if Ak.size else 0.0 for Ak in A] + [np.abs(A_lp).max() if A_lp.size else 0.0] + [1.0])
    normC = max([np.abs(c).max() if c.size else 0.0 for c in C] + [np.abs(c_lp).max() if nl else 0.0] + [1.0])
    xi = max(10.0, np.sqrt(nu), (1 + np.abs(b).max(initial=0)) / normA)
    eta = max(10.0, np.sqrt(nu), normC)
    X = [xi * np.eye(len(c)) for c in C]
    Z = [eta * np.eye(len(c)) for c in C]
    xl, zl = np.full(nl, xi), np.full(nl, eta)
    y = np.zeros(m)
    nb = 1 + np.linalg.norm(b)
    nc = 1 + np.sqrt(sum(np.sum(c * c) for c in C) + c_lp @ c_lp)
    info = {"status": "max_iter"}
    for it in range(1, max_iter + 1):
        rp = b - op(X, xl)
        Aty, Atyl = adj(y)
        Rd = [c - a - z for c, a, z in zip(C, Aty, Z)]
        rdl = c_lp - Atyl - zl
        mu = (sum(np.sum(x * z) for x, z in zip(X, Z)) + xl @ zl) / nu
        pobj = sum(np.sum(c * x) for c, x in zip(C, X)) + c_lp @ xl
        dobj = b @ y
        pres = np.linalg.norm(rp) / nb
        dres = np.sqrt(sum(np.sum(r * r) for r in Rd) + rdl @ rdl) / nc
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        info.update(iterations=it, primal_residual=pres, dual_residual=dres, gap=gap, mu=mu)
        if pres < tol and dres < tol and gap < tol:
            info["status"] = "optimal"
            break
        Zi = [np.linalg.inv(z) for z in Z]
        Zi = [(z + z.T) / 2 for z in Zi]
        # Schur complement M_ij = <A_i, X A_j Z^-1>
        M = (A_lp * (xl / zl)) @ A_lp.T
        for Ak, Xk, Zik in zip(A, X, Zi):
            W = Xk @ Ak @ Zik
            M += np.einsum("ipq,jqp->ij", Ak, W)
        M = (M + M.T) / 2
        try:
            cho = sla.cho_factor(M + 1e-14 * np.trace(M) / max(m, 1) * np.eye(m))
            solve = lambda r: sla.cho_solve(cho, r)  # noqa: E731
        except (np.linalg.LinAlgError, ValueError):
            solve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731

        def direction(Rc, rcl):
            HRd = [Xk @ R @ Zik for Xk, R, Zik in zip(X, Rd, Zi)]
            HRd = [(h + h.T) / 2 for h in HRd]
            rhs = rp - op([rc - h for rc, h in zip(Rc, HRd)], rcl - xl / zl * rdl)
            dy = solve(rhs)
            Ady, Adyl = adj(dy)
            dZ = [r - a for r, a in zip(Rd, Ady)]
            dzl = rdl - Adyl
            dX = [rc - Xk @ dz @ Zik for rc, Xk, dz, Zik in zip(Rc, X, dZ, Zi)]
            dX = [(d + d.T) / 2 for d in dX]
            dxl = rcl - xl / zl * dzl
            return dX, dxl, dy, dZ, dzl

        def steps(dX, dxl, dZ, dzl):
            ap = min([_max_step(x, d) for x, d in zip(X, dX)] + [_max_step_lp(xl, dxl), np.inf])
            ad = min([_max_step(z, d) for z, d in zip(Z, dZ)] + [_max_step_lp(zl, dzl), np.inf])
            return min(1.0, 0.95 * ap), min(1.0, 0.95 * ad)

        # predictor
        Rc = [-x for x in X]
        dX, dxl, dy, dZ, dzl = direction(Rc, -xl)
        ap, ad = steps(dX, dxl, dZ, dzl)
        mu_aff = (
            sum(np.sum((x + ap * dx) * (z + ad * dz)) for x, dx, z, dz in zip(X, dX, Z, dZ))
            + (xl + ap * dxl) @ (zl + ad * dzl)
        ) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector
        Rc = [sigma * mu * zi - x - (dx @ dz @ zi + (dx @ dz @ zi).T) / 2 for zi, x, dx, dz in zip(Zi, X, dX, dZ)]
        rcl = sigma * mu / zl - xl - dxl * dzl / zl
        dX, dxl, dy, dZ, dzl = direction(Rc, rcl)
        ap, ad = steps(dX, dxl, dZ, dzl)
        X = [x + ap * d for x, d in zip(X, dX)]
        xl = xl + ap * dxl
        y = y + ad * dy
        Z = [z + ad * d for z, d in zip(Z, dZ)]
        zl = zl + ad * dzl
        X = [(x + x.T) / 2 for x in X]
        Z = [(z + z.T) / 2 for z in Z]
    return X, xl, y, Z, zl, info


def _as_blocks(A, sizes) -> list[np.ndarray]:
    m = len(A)
    out = [np.zeros((m, n, n)) for n in sizes]
    for i, row in enumerate(A):
        for k, blk in enumerate(row):
            if blk is not None:
                blk = np.asarray(blk, float)
                out[k][i] = (blk + blk.T) / 2
    return out


def solve_sdp(
    A: Sequence[Sequence[np.ndarray | None]],
    b: Sequence[float],
    sizes: Sequence[int],
    tol: float = 1e-9,
    feas_tol: float = 1e-8,
    max_iter: int = 100,
    max_size: int = MAX_BASIS,
    margin_cap: float | None = None,
) -> SDPResult:
    """Find PSD blocks ``X_k`` with ``sum_k <A[i][k], X_k> = b[i]``, maximizing the margin.

    The margin is the largest ``t`` with every ``X_k - t*I`` PSD (capped at
    ``margin_cap``, default ``max(1, max|b|)``).  Raises :class:`SDPInfeasible`
    when the optimal margin is below ``-feas_tol``.
    """
    sizes = [int(n) for n in sizes]
    if any(n > max_size for n in sizes):
        raise ValueError(f"block size {max(sizes)} exceeds the cap of {max_size}")
    b = np.asarray(b, dtype=float)
    m = len(b)
    blocks = _as_blocks(A, sizes)
    traces = sum((np.einsum("mii->m", Ak) for Ak in blocks), np.zeros(m))
    cap = margin_cap if margin_cap is not None else max(1.0, float(np.abs(b).max(initial=0)))
    delta = 1e-7
    # orthant variables: t_plus, t_minus, slack of t_plus <= cap
    A_lp = np.zeros((m + 1, 3))
    A_lp[:m, 0], A_lp[:m, 1] = traces, -traces
    A_lp[m, 0], A_lp[m, 2] = 1.0, 1.0
    bb = np.append(b, cap)
    Ab = [np.concatenate([Ak, np.zeros((1,) + Ak.shape[1:])]) for Ak in blocks]
    C = [np.zeros((n, n)) for n in sizes]
    c_lp = np.array([-1.0 + delta, 1.0 + delta, 0.0])
    Y, xl, y, _, _, info = interior_point(C, Ab, bb, c_lp, A_lp, tol=tol, max_iter=max_iter)
    t = float(xl[0] - xl[1])
    X = [yk + t * np.eye(len(yk)) for yk in Y]
    res = SDPResult(
        X, y[:m], t, info["iterations"], info["primal_residual"], info["dual_residual"], info["gap"], xl
    )
    if info["status"] != "optimal":
        if info["primal_residual"] > 1e-6 or info["gap"] > 1e-5:
            raise SDPError(f"interior point did not converge in {max_iter} iterations ({info})")
        log.debug("solve_sdp: loose convergence %s", info)
    if t < -feas_tol:
        raise SDPInfeasible(f"no PSD solution: best margin {t:.3g}", -y[:m], t)
    return res
