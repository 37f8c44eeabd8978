"""Coupled solver for the stop-or-switch system with m controlled components.

Components 1..m each follow one fixed control and are obstructed from above
by the cheapest switch (any other component plus the switching cost k); the
extra component is purely algebraic: it must immediately stop against the
obstacle or switch, so its value is min{f, min_j (v_j + k)}.  One implicit
time step is solved by Gauss-Seidel sweeps over components with a
stop/continue policy iteration inside each component, iterated to a fixed
point.  The gap between the components and the finite-control obstacle
solution shrinks like a fractional power of k; ``k_sweep`` measures it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fdcore
from .errors import FixedPointDiverged, UnsupportedProblem
from .grids import GridFunction, SpatialGrid, measured_lip, sample
from .hamiltonians import ProblemSpec
from .reference import ControlSet, FDSolverConfig, _obstacle_batch, _terminal_batch, fd_hjb_finite_controls
from .scheme import SchemeSolution, time_grid


@dataclass
class SwitchingConfig:
    controls: ControlSet
    k: float
    grid: SpatialGrid
    time_steps: int
    fp_tol: float = 1e-10
    fp_max_iters: int = 10_000

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("switching cost k must be positive")
        if len(self.controls) < 1:
            raise ValueError("need at least one control")


@dataclass
class SwitchingSolution:
    """Per-component time-indexed slice families, all sharing the terminal
    slice; components 0..m-1 carry the controls, component m the stop role."""

    spec: ProblemSpec
    cfg: SwitchingConfig
    times: np.ndarray
    components: list  # list over components of list over times of GridFunction

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_values(self, i: int) -> np.ndarray:
        """(n_times, n_nodes) value matrix of component i."""
        return np.stack([sl.values.ravel() for sl in self.components[i]])

    def to_csv(self, path) -> None:
        grid = self.cfg.grid
        pts = grid.nodes()
        cols = ["component", "t"] + [f"x{i}" for i in range(grid.dim)] + ["value"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for i, family in enumerate(self.components):
                for t, sl in zip(self.times, family):
                    flat = sl.values.ravel()
                    for k in range(pts.shape[0]):
                        coords = ",".join(f"{c:.12e}" for c in pts[k])
                        fh.write(f"{i + 1},{t:.12e},{coords},{flat[k]:.12e}\n")


def _switch_obstacle(values: list, i: int, k: float) -> np.ndarray:
    """min over components j != i of (v_j + k), elementwise."""
    out = None
    for j, v in enumerate(values):
        if j == i:
            continue
        out = v + k if out is None else np.minimum(out, v + k)
    return out


def solve_switching(spec: ProblemSpec, cfg: SwitchingConfig) -> SwitchingSolution:
    """Backward implicit stepping of the coupled stop-or-switch system."""
    if spec.dim != 1:
        raise UnsupportedProblem("the switching solver supports 1D problems only")
    grid = cfg.grid
    x = grid.axis(0)
    m = len(cfg.controls)
    dt = spec.horizon_T / cfg.time_steps
    times = time_grid(spec.horizon_T, dt)
    terminal = sample(grid, spec.terminal_U, spec.lipschitz_M)
    families = [[terminal] for _ in range(m + 1)]
    v = [terminal.values.ravel().copy() for _ in range(m + 1)]
    control_arrays = cfg.controls.as_arrays()
    for step_idx in range(1, len(times)):
        t = times[step_idx]
        step_len = times[step_idx - 1] - times[step_idx]
        ops = [
            fdcore.control_ops(spec, t, x, [control_arrays[i]]) for i in range(m)
        ]
        f_vals = _obstacle_batch(spec, t, x)
        v_next = [vi.copy() for vi in v]
        scale = 1.0 + max(float(np.max(np.abs(vi))) for vi in v_next)
        converged = False
        for sweep in range(1, cfg.fp_max_iters + 1):
            biggest = 0.0
            for i in range(m):
                psi = _switch_obstacle(v, i, cfg.k)
                lo, dg, up, ell = ops[i]
                vi_new, _ = fdcore.howard_solve(
                    lo, dg, up, ell, v_next[i], psi, step_len, cfg.fp_tol, cfg.fp_max_iters
                )
                biggest = max(biggest, float(np.max(np.abs(vi_new - v[i]))))
                v[i] = vi_new
            stop_new = np.minimum(f_vals, _switch_obstacle(v[:m] + [None], m, cfg.k))
            biggest = max(biggest, float(np.max(np.abs(stop_new - v[m]))))
            v[m] = stop_new
            if biggest <= cfg.fp_tol * scale:
                converged = True
                break
        if not converged:
            raise FixedPointDiverged(
                f"component sweeps did not settle at t={t:.6g}; "
                f"k may be too small for this resolution"
            )
        for i in range(m + 1):
            families[i].append(
                GridFunction(grid, v[i], max(measured_lip(grid, v[i]), spec.lipschitz_M))
            )
    return SwitchingSolution(spec, cfg, times, families)


def switching_residual(sol: SwitchingSolution, spec: ProblemSpec, cfg: SwitchingConfig, t, component: int) -> float:
    """Max-norm discrete-system residual of one component at step time t.

    ``component`` is 1-based; the last component's residual is the defect of
    its algebraic min identity.
    """
    idx = int(np.argmin(np.abs(sol.times - t)))
    if idx == 0 or abs(sol.times[idx] - t) > 1e-9:
        raise ValueError("t must be an interior step time")
    x = cfg.grid.axis(0)
    m = len(cfg.controls)
    dt = sol.times[idx - 1] - sol.times[idx]
    values = [sol.components[i][idx].values.ravel() for i in range(m + 1)]
    f_vals = _obstacle_batch(spec, t, x)
    i = component - 1
    if i == m:
        ident = np.minimum(f_vals, _switch_obstacle(values[:m] + [None], m, cfg.k))
        return float(np.max(np.abs(values[m] - ident)))
    lo, dg, up, ell = fdcore.control_ops(spec, t, x, [cfg.controls.as_arrays()[i]])
    psi = _switch_obstacle(values, i, cfg.k)
    v_next = sol.components[i][idx - 1].values.ravel()
    b = (values[i] - v_next) / dt + fdcore.apply_tridiag(lo, dg, up, values[i])[0] - ell[0]
    return float(np.max(np.abs(np.maximum(b, values[i] - psi))))


@dataclass
class KSweepReport:
    ks: list
    max_gaps: list
    min_gaps: list
    identity_defects: list
    slope: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("k,max_gap,min_gap,slope\n")
            for k, hi, lo in zip(self.ks, self.max_gaps, self.min_gaps):
                fh.write(f"{k:.12e},{hi:.12e},{lo:.12e},{self.slope:.12e}\n")


def stop_identity_defect(sol: SwitchingSolution) -> float:
    """Max over interior times/nodes of the algebraic min-identity defect of
    the stop component."""
    m = len(sol.cfg.controls)
    x = sol.cfg.grid.axis(0)
    worst = 0.0
    for idx in range(1, len(sol.times)):
        t = sol.times[idx]
        f_vals = _obstacle_batch(sol.spec, t, x)
        vals = [sol.components[i][idx].values.ravel() for i in range(m)]
        ident = np.minimum(f_vals, _switch_obstacle(vals + [None], m, sol.cfg.k))
        worst = max(worst, float(np.max(np.abs(sol.components[m][idx].values.ravel() - ident))))
    return worst


def k_sweep(spec: ProblemSpec, cfg: SwitchingConfig, ks, region=None) -> KSweepReport:
    """Gap between switching components and the finite-control reference.

    For each switching cost k, reports the extreme values of v_i - u^m over
    components, nodes and interior step times (restricted to ``region`` =
    (x_lo, x_hi, t_lo, t_hi) when given), plus the log-log slope of the max
    gap against k.
    """
    ks = list(ks)
    if any(k2 >= k1 for k1, k2 in zip(ks, ks[1:])) or any(k <= 0 for k in ks):
        raise ValueError("ks must be strictly decreasing and positive")
    fd_cfg = FDSolverConfig(
        time_steps=cfg.time_steps,
        grid=cfg.grid,
        psor_tol=cfg.fp_tol,
        psor_max_iters=cfg.fp_max_iters,
    )
    u_ref = fd_hjb_finite_controls(spec, cfg.controls, fd_cfg)
    x = cfg.grid.axis(0)
    if region is not None:
        x_lo, x_hi, t_lo, t_hi = region
    else:
        x_lo, x_hi = cfg.grid.lo[0], cfg.grid.hi[0]
        t_lo, t_hi = 0.0, spec.horizon_T
    node_mask = (x >= x_lo - 1e-12) & (x <= x_hi + 1e-12)
    max_gaps, min_gaps, identity_defects = [], [], []
    for k in ks:
        sol = solve_switching(spec, replace(cfg, k=k))
        hi, lo = -np.inf, np.inf
        for idx in range(1, len(sol.times)):
            t = sol.times[idx]
            if not (t_lo - 1e-12 <= t <= t_hi + 1e-12):
                continue
            ref_vals = u_ref.slices[idx].values.ravel()[node_mask]
            for i in range(sol.n_components):
                gap = sol.components[i][idx].values.ravel()[node_mask] - ref_vals
                hi = max(hi, float(np.max(gap)))
                lo = min(lo, float(np.min(gap)))
        max_gaps.append(hi)
        min_gaps.append(lo)
        identity_defects.append(stop_identity_defect(sol))
    logs = np.log(np.maximum(max_gaps, 1e-300))
    slope = float(np.polyfit(np.log(ks), logs, 1)[0])
    return KSweepReport(ks, max_gaps, min_gaps, identity_defects, slope)
