"""One splitting step: expectation along a coefficient-frozen diffusion,
then minimization of the dual running cost over a bounded window.

For a slice phi and a step of length dt starting at time t, the operator
value at x is

    min over y of { dt * L(t, x, (x - y) / dt) + E[phi(Y)] },
    Y = y + b(t, y) * dt + sigma(t, y) * sqrt(dt) * xi,   xi standard normal.

The expectation is a tensor-product Gauss-Hermite sum; the minimization
scans a window of radius q_max * dt around x and refines by golden section
(coordinate descent in 2D).  Everything is evaluated lane-wise over a batch
of points with loop-accumulated reductions, so a one-point batch reproduces
a full-slice batch bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import WindowTooSmall
from .grids import GridFunction, SpatialGrid
from .hamiltonians import ProblemSpec, legendre_values

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
_EDGE_REL_TOL = 1e-7


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for expectations against a standard Gaussian on R^d.

    Weights are positive and sum to one; a rule of a given order integrates
    monomials of total degree <= 2*order - 1 exactly.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != (nodes.shape[0],):
            raise ValueError("nodes must be (K, d), weights (K,)")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def noise_dim(self) -> int:
        return self.nodes.shape[1]


def gauss_hermite(order: int, dim: int = 1) -> QuadratureRule:
    """Tensor-product Gauss-Hermite rule normalized for a standard Gaussian."""
    if order < 1:
        raise ValueError("order must be >= 1")
    z, w = np.polynomial.hermite.hermgauss(order)
    z = z * np.sqrt(2.0)
    w = w / np.sqrt(np.pi)
    if dim == 1:
        return QuadratureRule(order, z.reshape(-1, 1), w)
    mesh = np.meshgrid(*([z] * dim), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.ones(nodes.shape[0])
    for wm in wmesh:
        weights = weights * wm.ravel()
    weights = weights / weights.sum()
    return QuadratureRule(order, nodes, weights)


@dataclass
class OperatorConfig:
    """Search parameters of the backward operator.

    ``q_max`` should come from :func:`splitvi.hamiltonians.effective_control_bound`;
    the window saturation error reports when it was set too small.
    """

    quad: QuadratureRule
    q_max: float
    coarse_candidates: int = 17
    refine_iters: int = 30
    sweeps: int = 2

    def __post_init__(self):
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        if self.coarse_candidates < 9:
            raise ValueError("coarse_candidates must be >= 9")
        if self.refine_iters < 30:
            raise ValueError("refine_iters must be >= 30")


def frozen_expectation(spec: ProblemSpec, t, y, dt, phi: GridFunction, quad: QuadratureRule):
    """Gauss-Hermite approximation of E[phi(Y)] for the one-step frozen SDE.

    ``y`` may be a single point or an (N, dim) batch; returns a scalar or an
    (N,) array of expectations.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t + dt > spec.horizon_T + 1e-9:
        raise ValueError("t + dt exceeds the horizon")
    pts, single = spec._points(y)
    b = spec.drift_at(t, pts)
    s = spec.sigma_at(t, pts)
    base = pts + b * dt
    sq = np.sqrt(dt)
    acc = None
    for k in range(quad.nodes.shape[0]):
        shift = np.einsum("pnd,d->pn", s, quad.nodes[k])
        vals = phi.eval(base + sq * shift)
        term = quad.weights[k] * vals
        acc = term if acc is None else acc + term
    return float(acc[0]) if single else acc


def _window_objective(spec, t, dt, phi, centers, quad):
    """Per-lane objective m(y) = dt*L(t, x, (x-y)/dt) + E[phi(Y^{t,y})]."""

    def m_of(y_pts):
        q = (centers - y_pts) / dt
        lvals = legendre_values(spec, t, centers, q)
        e = frozen_expectation(spec, t, y_pts, dt, phi, quad)
        return dt * lvals + np.asarray(e, dtype=float).reshape(-1)

    return m_of


def _better(v, off, best_v, best_off):
    """Strictly smaller value, or equal value with lexicographically smaller
    offset, wins; keeps the minimizer deterministic across platforms."""
    lt = v < best_v
    eq = v == best_v
    lex = off[:, 0] < best_off[:, 0]
    for ax in range(1, off.shape[1]):
        lex = lex | ((off[:, ax - 1] == best_off[:, ax - 1]) & (off[:, ax] < best_off[:, ax]))
    return lt | (eq & lex)


def _golden_axis(m_of, centers, cur_off, cur_val, ax, a, b, iters):
    """Golden-section refinement of one coordinate, lane-wise.

    ``a``/``b`` are per-lane bracket endpoints for the ``ax`` offset; the
    current point is only replaced by strictly better (or lex-smaller tied)
    candidates, so the search never regresses.
    """
    n = centers.shape[0]
    for _ in range(iters):
        width = b - a
        c1 = b - _INVPHI * width
        c2 = a + _INVPHI * width
        off1 = cur_off.copy()
        off1[:, ax] = c1
        v1 = m_of(centers + off1)
        upd = _better(v1, off1, cur_val, cur_off)
        cur_val = np.where(upd, v1, cur_val)
        cur_off = np.where(upd[:, None], off1, cur_off)
        off2 = cur_off.copy()
        off2[:, ax] = c2
        v2 = m_of(centers + off2)
        upd = _better(v2, off2, cur_val, cur_off)
        cur_val = np.where(upd, v2, cur_val)
        cur_off = np.where(upd[:, None], off2, cur_off)
        keep_left = v1 <= v2
        b = np.where(keep_left, c2, b)
        a = np.where(keep_left, a, c1)
    return cur_off, cur_val


def _minimize_window(m_of, centers, radius, cfg: OperatorConfig):
    """Coarse scan plus golden refinement of m(y) over the offset box
    [-radius, radius]^dim around each lane's center."""
    n, dim = centers.shape
    cc = cfg.coarse_candidates
    offsets_axis = np.linspace(-radius, radius, cc)
    if dim == 1:
        coarse = offsets_axis.reshape(-1, 1)
    else:
        ga, gb = np.meshgrid(offsets_axis, offsets_axis, indexing="ij")
        coarse = np.stack([ga.ravel(), gb.ravel()], axis=-1)
    cur_val = np.full(n, np.inf)
    cur_off = np.zeros((n, dim))
    for row in coarse:
        off = np.tile(row, (n, 1))
        v = m_of(centers + off)
        upd = _better(v, off, cur_val, cur_off)
        cur_val = np.where(upd, v, cur_val)
        cur_off = np.where(upd[:, None], off, cur_off)
    step = 2.0 * radius / (cc - 1)
    sweeps = 1 if dim == 1 else cfg.sweeps
    for _ in range(sweeps):
        for ax in range(dim):
            a = np.clip(cur_off[:, ax] - step, -radius, radius)
            b = np.clip(cur_off[:, ax] + step, -radius, radius)
            cur_off, cur_val = _golden_axis(
                m_of, centers, cur_off, cur_val, ax, a, b, cfg.refine_iters
            )
    edge_dist = radius - np.max(np.abs(cur_off), axis=1)
    bad = edge_dist < _EDGE_REL_TOL * radius
    if np.any(bad):
        lane = int(np.argmax(bad))
        raise WindowTooSmall(
            f"minimizer saturated the window of radius {radius:.6g} at "
            f"x={centers[lane]}; enlarge q_max and retry",
            point=centers[lane],
        )
    return cur_val, centers + cur_off


def apply(spec: ProblemSpec, t, dt, phi: GridFunction, x, cfg: OperatorConfig):
    """Backward-operator value and minimizer at a single point.

    Returns ``(value, minimizer_y)`` with the minimizer a float in 1D and a
    shape-(2,) array in 2D.  Raises :class:`WindowTooSmall` when the refined
    minimizer saturates the search window.
    """
    pts, _ = spec._points(x)
    m_of = _window_objective(spec, t, dt, phi, pts, cfg.quad)
    vals, ys = _minimize_window(m_of, pts, cfg.q_max * dt, cfg)
    y = float(ys[0, 0]) if spec.dim == 1 else ys[0]
    return float(vals[0]), y


def apply_slice(spec: ProblemSpec, t, dt, phi: GridFunction, cfg: OperatorConfig) -> GridFunction:
    """Backward operator applied at every node of phi's grid.

    The output's declared Lipschitz bound is the propagated regularity
    estimate, floored by the slope actually measured on the grid.
    """
    from .grids import measured_lip

    grid = phi.grid
    centers = grid.nodes()
    m_of = _window_objective(spec, t, dt, phi, centers, cfg.quad)
    try:
        vals, _ = _minimize_window(m_of, centers, cfg.q_max * dt, cfg)
    except WindowTooSmall as err:
        raise WindowTooSmall(
            f"operator slice at t={t:.6g} failed: {err}", point=err.point
        ) from err
    growth = spec.lipschitz_M * (1.0 + phi.lip_bound)
    lip = max(phi.lip_bound + growth * dt, measured_lip(grid, vals))
    return GridFunction(grid, vals.reshape(grid.shape), lip)


def apply_batch(spec: ProblemSpec, t, dt, phi: GridFunction, points, cfg: OperatorConfig):
    """Operator values at an (N, dim) batch of points (no minimizers)."""
    pts, _ = spec._points(points)
    m_of = _window_objective(spec, t, dt, phi, pts, cfg.quad)
    vals, _ = _minimize_window(m_of, pts, cfg.q_max * dt, cfg)
    return vals
