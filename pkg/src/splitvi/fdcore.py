"""Monotone 1D finite-difference machinery shared by the reference solvers.

The spatial operator of the control reformulation,

    A^q u = -(1/2) sigma^2 u_xx - (b - q) u_x,

is discretized with central second differences and first-order upwinding on
the drift sign, which makes each per-control row an M-matrix row.  Ghost
values outside the box are clamped to the boundary node (matching the
interpolation module's constant extrapolation), so monotonicity holds up to
the edge.  One implicit step with obstacle and control set is solved by
policy iteration over (control, stop) pairs; projected SOR is kept as a
fallback path.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import PolicyIterationDiverged
from .hamiltonians import ProblemSpec, legendre_values


def control_ops(spec: ProblemSpec, t, x: np.ndarray, controls) -> tuple:
    """Upwinded tridiagonal rows and running costs for each control.

    Returns (lo, dg, up, ell), each of shape (C, N): ``lo[c, i]`` multiplies
    u[i-1], ``dg[c, i]`` u[i], ``up[c, i]`` u[i+1]; ``ell[c, i]`` is the
    dual running cost L(t, x_i, q_c).
    """
    if spec.dim != 1:
        raise ValueError("control_ops is 1D only")
    n = x.shape[0]
    h = x[1] - x[0]
    s = spec.sigma_at(t, x).reshape(n, -1)
    s2 = np.einsum("nd,nd->n", s, s)
    b = spec.drift_at(t, x).reshape(n)
    n_controls = len(controls)
    lo = np.zeros((n_controls, n))
    dg = np.zeros((n_controls, n))
    up = np.zeros((n_controls, n))
    ell = np.zeros((n_controls, n))
    diff_diag = s2 / h**2
    diff_off = -s2 / (2.0 * h**2)
    for c, q in enumerate(controls):
        qv = float(np.atleast_1d(q)[0])
        mu = b - qv
        mu_pos = np.maximum(mu, 0.0)
        mu_neg = np.maximum(-mu, 0.0)
        lo[c] = diff_off - mu_neg / h
        up[c] = diff_off - mu_pos / h
        dg[c] = diff_diag + np.abs(mu) / h
        ell[c] = legendre_values(spec, t, x, np.full((n, 1), qv))
        # clamped ghost nodes: fold the out-of-box coefficient into the diagonal
        dg[c, 0] += lo[c, 0]
        lo[c, 0] = 0.0
        dg[c, -1] += up[c, -1]
        up[c, -1] = 0.0
    return lo, dg, up, ell


def apply_tridiag(lo, dg, up, u):
    """A u for tridiagonal rows of shape (C, N) against u of shape (N,)."""
    out = dg * u
    out[:, 1:] += lo[:, 1:] * u[:-1]
    out[:, :-1] += up[:, :-1] * u[1:]
    return out


def _solve_policy_rows(lo, dg, up, rhs, stop, f_vals, dt):
    """Direct solve of the mixed system: stop rows pinned to the obstacle,
    continue rows (1/dt + A) u = rhs."""
    n = rhs.shape[0]
    band = np.zeros((3, n))
    band[0, 1:] = np.where(stop[:-1], 0.0, up[:-1])
    band[1, :] = np.where(stop, 1.0, 1.0 / dt + dg)
    band[2, :-1] = np.where(stop[1:], 0.0, lo[1:])
    b = np.where(stop, f_vals, rhs)
    return solve_banded((1, 1), band, b)


def howard_solve(lo, dg, up, ell, u_next, f_vals, dt, tol, max_iters):
    """One implicit obstacle step by policy iteration over (control, stop).

    Solves  max{ (u - u_next)/dt + max_c (A_c u - ell_c), u - f } = 0.
    Terminates on the complementarity defect of the iterate itself (not on
    policy stability: near-equal controls may tie-cycle in floating point
    while the value is already converged).  Returns (u, iterations); raises
    :class:`PolicyIterationDiverged` past the iteration cap.
    """
    n = u_next.shape[0]
    rows = np.arange(n)
    u = u_next.copy()
    scale = (1.0 + float(np.max(np.abs(u_next)))) / dt
    for it in range(1, max_iters + 1):
        b_all = (u - u_next) / dt + apply_tridiag(lo, dg, up, u) - ell
        c_star = np.argmax(b_all, axis=0)
        b_max = b_all[c_star, rows]
        defect = float(np.max(np.abs(np.maximum(b_max, u - f_vals))))
        if it > 1 and defect <= tol * (1.0 + scale):
            return u, it
        stop = (u - f_vals) > b_max
        rhs = u_next / dt + ell[c_star, rows]
        u = _solve_policy_rows(
            lo[c_star, rows], dg[c_star, rows], up[c_star, rows], rhs, stop, f_vals, dt
        )
    raise PolicyIterationDiverged(
        f"policy iteration did not settle within {max_iters} iterations"
    )


def psor_solve(lo, dg, up, ell, u_next, f_vals, dt, tol, max_iters, omega=1.0):
    """Fallback path: control improvement wrapped around projected SOR.

    Slower than Howard iteration but exercises the same complementarity
    system through an independent relaxation.
    """
    n = u_next.shape[0]
    rows = np.arange(n)
    u = np.minimum(u_next.copy(), f_vals)
    scale = (1.0 + float(np.max(np.abs(u_next)))) / dt
    for outer in range(1, max_iters + 1):
        b_all = (u - u_next) / dt + apply_tridiag(lo, dg, up, u) - ell
        c_star = np.argmax(b_all, axis=0)
        lo_p, dg_p, up_p = lo[c_star, rows], dg[c_star, rows], up[c_star, rows]
        rhs = u_next / dt + ell[c_star, rows]
        diag = 1.0 / dt + dg_p
        for _ in range(500):
            worst = 0.0
            for i in range(n):
                acc = rhs[i]
                if i > 0:
                    acc -= lo_p[i] * u[i - 1]
                if i < n - 1:
                    acc -= up_p[i] * u[i + 1]
                cand = min(f_vals[i], (1.0 - omega) * u[i] + omega * acc / diag[i])
                worst = max(worst, abs(cand - u[i]))
                u[i] = cand
            if worst <= tol * (1.0 + scale) / 10.0:
                break
        res = complementarity_residual(lo, dg, up, ell, u, u_next, f_vals, dt)
        if res <= tol * (1.0 + scale):
            return u, outer
    raise PolicyIterationDiverged(f"projected SOR did not settle within {max_iters} sweeps")


def complementarity_residual(lo, dg, up, ell, u, u_next, f_vals, dt) -> float:
    """Max-norm defect of max{(u - u_next)/dt + max_c(A_c u - ell_c), u - f}."""
    b_all = (u - u_next) / dt + apply_tridiag(lo, dg, up, u) - ell
    b_max = np.max(b_all, axis=0)
    return float(np.max(np.abs(np.maximum(b_max, u - f_vals))))
