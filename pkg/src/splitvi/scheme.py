"""Backward time marching with the obstacle cap, and the scheme residual.

The recursion starts from the terminal datum and alternates one backward
operator step with a nodewise min against the obstacle,

    u(t, x) = min{ (operator step of u(t + dt, .))(x), f(t, x) }.

The stored family of slices is interpreted off the time grid by linear
interpolation; over the last interval this reproduces the dedicated
terminal interpolant exactly (weights (t + dt - T)/dt and (T - t)/dt).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backward
from .backward import OperatorConfig
from .errors import OutOfRange, WindowTooSmall
from .grids import GridFunction, SpatialGrid, sample
from .hamiltonians import ProblemSpec


def time_grid(T: float, dt: float) -> np.ndarray:
    """Descending step times T, T - dt, ... ending at 0.

    A leftover shorter than dt/10 is merged into the earliest step rather
    than taken as a degenerate step of its own.
    """
    if not 0.0 < dt <= T:
        raise ValueError("need 0 < dt <= T")
    k_round = round(T / dt)
    if k_round >= 1 and abs(T - k_round * dt) <= 1e-9 * max(dt, T):
        times = [T - k * dt for k in range(k_round + 1)]
        times[-1] = 0.0
        return np.array(times)
    k = int(np.floor(T / dt + 1e-12))
    leftover = T - k * dt
    times = [T - j * dt for j in range(k + 1)]
    if leftover >= dt / 10.0:
        times.append(0.0)
    else:
        times[-1] = 0.0
    return np.array(times)


@dataclass
class SchemeSolution:
    """Time-indexed family of slices produced by the backward recursion.

    ``times`` is descending, starting at the horizon; ``slices[i]``
    corresponds to ``times[i]``.  The slice at the horizon is the sampled
    terminal datum and every earlier slice satisfies the obstacle cap.
    """

    spec: ProblemSpec
    delta: float
    times: np.ndarray
    slices: list

    @property
    def grid(self) -> SpatialGrid:
        return self.slices[0].grid

    def slice_at(self, t: float) -> GridFunction:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9:
            raise OutOfRange(f"{t} is not a stored step time")
        return self.slices[idx]

    def eval(self, t, x):
        """Value at (t, x): linear in time between bracketing slices,
        multilinear in space inside each slice.

        Over the last interval this is the terminal interpolant with
        weights (t + dt - T)/dt and (T - t)/dt.  Raises
        :class:`OutOfRange` for t outside [0, T].
        """
        T = self.times[0]
        if t < -1e-9 or t > T + 1e-9:
            raise OutOfRange(f"t={t} outside [0, {T}]")
        t = min(max(t, 0.0), T)
        diffs = np.abs(self.times - t)
        hit = int(np.argmin(diffs))
        if diffs[hit] <= 1e-12 * max(1.0, T):
            return self.slices[hit].eval(x)
        below = int(np.searchsorted(-self.times, -t, side="left"))
        hi, lo = below - 1, below
        t_hi, t_lo = self.times[hi], self.times[lo]
        w_hi = (t - t_lo) / (t_hi - t_lo)
        v_hi = self.slices[hi].eval(x)
        v_lo = self.slices[lo].eval(x)
        return (1.0 - w_hi) * v_lo + w_hi * v_hi

    def to_csv(self, path) -> None:
        """Rows (t, coordinates..., value), time descending then node order."""
        grid = self.grid
        pts = grid.nodes()
        cols = ["t"] + [f"x{i}" for i in range(grid.dim)] + ["value"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for t, sl in zip(self.times, self.slices):
                flat = sl.values.ravel()
                for k in range(pts.shape[0]):
                    coords = ",".join(f"{c:.12e}" for c in pts[k])
                    fh.write(f"{t:.12e},{coords},{flat[k]:.12e}\n")


def step(spec: ProblemSpec, t, dt, next_slice: GridFunction, cfg: OperatorConfig) -> GridFunction:
    """One recursion step: operator slice capped nodewise by the obstacle."""
    op = backward.apply_slice(spec, t, dt, next_slice, cfg)
    obstacle = sample(next_slice.grid, lambda x: spec.obstacle_f(t, x), spec.lipschitz_M)
    values = np.minimum(op.values, obstacle.values)
    lip = max(op.lip_bound, spec.lipschitz_M)
    return GridFunction(next_slice.grid, values, lip)


def solve(spec: ProblemSpec, dt, grid: SpatialGrid, cfg: OperatorConfig) -> SchemeSolution:
    """March from the terminal slice down the aligned time grid."""
    times = time_grid(spec.horizon_T, dt)
    terminal = sample(grid, spec.terminal_U, spec.lipschitz_M)
    slices = [terminal]
    for i in range(1, len(times)):
        t = times[i]
        step_len = times[i - 1] - times[i]
        try:
            slices.append(step(spec, t, step_len, slices[-1], cfg))
        except WindowTooSmall as err:
            raise WindowTooSmall(f"step at t={t:.6g} failed: {err}", point=err.point) from err
    return SchemeSolution(spec, dt, times, slices)


def residual(spec: ProblemSpec, dt, t, x, p, v: GridFunction, cfg: OperatorConfig) -> float:
    """Discrete-scheme residual at one point:

    max{ (p - operator value) / dt, p - f(t, x) }.

    It vanishes exactly at (p, v) taken from consecutive solved slices, and
    is the quantity whose consistency decay the property suite measures.
    """
    value, _ = backward.apply(spec, t, dt, v, x, cfg)
    return max((p - value) / dt, p - spec.obstacle_f(t, x))


def obstacle_cap_defect(sol: SchemeSolution) -> float:
    """Largest violation of slice <= obstacle over stored interior times."""
    worst = 0.0
    for t, sl in zip(sol.times[1:], sol.slices[1:]):
        obstacle = sample(sol.grid, lambda x: sol.spec.obstacle_f(t, x), sol.spec.lipschitz_M)
        worst = max(worst, float(np.max(sl.values - obstacle.values)))
    return worst


def sup_bound_budget(sol: SchemeSolution) -> float:
    """Uniform bound implied by the data: |U| plus horizon times the zero-
    momentum Hamiltonian scale, plus slack for a negative obstacle."""
    spec = sol.spec
    grid = sol.grid
    pts = grid.nodes()
    u_inf = float(np.max(np.abs(sol.slices[0].values)))
    h0 = 0.0
    f_neg = 0.0
    for t in np.linspace(0.0, spec.horizon_T, 5):
        for k in range(0, pts.shape[0], max(1, pts.shape[0] // 32)):
            arg = pts[k, 0] if spec.dim == 1 else pts[k]
            h0 = max(h0, abs(spec.hamiltonian.value(t, arg, np.zeros(spec.dim))))
            f_neg = max(f_neg, -float(spec.obstacle_f(t, arg)))
    return u_inf + spec.horizon_T * h0 + f_neg
