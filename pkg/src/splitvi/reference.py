"""Independent oracles the scheme is measured against.

None of these share code with the splitting operator: the closed-form
transform oracle integrates the linearized equation directly, the
finite-difference oracles discretize the obstacle complementarity with
upwinded implicit stepping and policy iteration, and the Monte Carlo oracle
estimates the one-step expectation from seeded Gaussian draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fdcore
from .errors import UnsupportedProblem
from .grids import GridFunction, SpatialGrid, measured_lip, sample
from .hamiltonians import ProblemSpec, QuadraticIso, effective_control_bound
from .scheme import SchemeSolution, time_grid

#: Obstacle values at or above this threshold are treated as "no obstacle".
NO_OBSTACLE_SENTINEL = 1e9


@dataclass
class FDSolverConfig:
    """Settings of the implicit finite-difference obstacle solver."""

    time_steps: int
    grid: SpatialGrid
    psor_tol: float = 1e-10
    psor_max_iters: int = 10_000
    theta: float = 1.0
    n_controls: int = 129
    q_max: float | None = None
    method: str = "policy"  # "policy" (Howard) or "psor" fallback

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.time_steps < 1:
            raise ValueError("time_steps must be >= 1")
        if self.method not in ("policy", "psor"):
            raise ValueError("method must be 'policy' or 'psor'")


@dataclass(frozen=True)
class ControlSet:
    """Ordered finite control set; prefixes model nested refinement."""

    controls: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "controls", tuple(tuple(np.atleast_1d(q).tolist()) for q in self.controls)
        )

    def __len__(self):
        return len(self.controls)

    def prefix(self, m: int) -> "ControlSet":
        if not 1 <= m <= len(self.controls):
            raise ValueError("prefix length out of range")
        return ControlSet(self.controls[:m])

    def as_arrays(self):
        return [np.array(q) for q in self.controls]

    @staticmethod
    def equally_spaced(m: int, radius: float) -> "ControlSet":
        """m controls spanning [-radius, radius], ordered center-out so that
        prefixes remain sensible refinements."""
        vals = np.linspace(-radius, radius, m)
        order = np.argsort(np.abs(vals), kind="stable")
        return ControlSet(tuple((float(vals[i]),) for i in order))


def _is_effectively_unobstructed(spec: ProblemSpec, grid_probe=None) -> bool:
    xs = grid_probe if grid_probe is not None else np.linspace(-2.0, 2.0, 7)
    for t in np.linspace(0.0, spec.horizon_T, 4):
        for x in xs:
            if spec.obstacle_f(t, x) < NO_OBSTACLE_SENTINEL / 10.0:
                return False
    return True


def cole_hopf_reference(spec: ProblemSpec, t, x, quad_order: int = 96):
    """Closed-form solution of the unobstructed quadratic problem.

    Requires a 1D quadratic-Hamiltonian spec with constant sigma > 0, zero
    drift, and no effective obstacle.  The exponential change of variable
    with scale a = sigma^2 / c turns the semilinear equation into the heat
    equation, so

        u(t, x) = -a * log E[ exp(-U(x + sigma * W_{T-t}) / a) ],

    evaluated here with high-order Gauss-Hermite quadrature.  Accepts a
    scalar or a 1D array of x values.
    """
    kind = spec.hamiltonian
    if spec.dim != 1 or not isinstance(kind, QuadraticIso):
        raise UnsupportedProblem("transform oracle needs a 1D quadratic Hamiltonian")
    probes = np.linspace(-2.0, 2.0, 5)
    sig = np.array([float(spec.sigma_at(ti, xi).reshape(-1)[0]) for ti in (0.0, spec.horizon_T) for xi in probes])
    if sig.std() > 1e-12 or sig[0] <= 0:
        raise UnsupportedProblem("transform oracle needs constant positive sigma")
    drift = np.array([float(spec.drift_at(ti, xi).reshape(-1)[0]) for ti in (0.0, spec.horizon_T) for xi in probes])
    if np.max(np.abs(drift)) > 1e-12:
        raise UnsupportedProblem("transform oracle needs zero drift")
    if not _is_effectively_unobstructed(spec):
        raise UnsupportedProblem("transform oracle needs an unobstructed problem")
    if t < -1e-12 or t > spec.horizon_T + 1e-12:
        raise UnsupportedProblem(f"t={t} outside [0, T]")

    sigma = float(sig[0])
    a = sigma**2 / kind.c
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    s = sigma * np.sqrt(max(spec.horizon_T - t, 0.0))
    z, w = np.polynomial.hermite.hermgauss(quad_order)
    z = z * np.sqrt(2.0)
    w = w / np.sqrt(np.pi)
    pts = xs[:, None] + s * z[None, :]
    u_vals = _terminal_batch(spec, pts.ravel()).reshape(pts.shape)
    inner = np.exp(-u_vals / a) @ w
    out = -a * np.log(inner)
    return float(out[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def _terminal_batch(spec: ProblemSpec, xs: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(spec.terminal_U(xs), dtype=float)
        if vals.shape == xs.shape:
            return vals
    except Exception:
        pass
    return np.array([spec.terminal_U(v) for v in xs])


def _obstacle_batch(spec: ProblemSpec, t, xs: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(spec.obstacle_f(t, xs), dtype=float)
        if vals.shape == xs.shape:
            return vals
    except Exception:
        pass
    return np.array([spec.obstacle_f(t, v) for v in xs])


def _fd_march(spec: ProblemSpec, controls, cfg: FDSolverConfig) -> SchemeSolution:
    """Backward theta-stepping of the obstacle complementarity system."""
    if spec.dim != 1:
        raise UnsupportedProblem("the finite-difference oracles support 1D problems only")
    grid = cfg.grid
    x = grid.axis(0)
    dt = spec.horizon_T / cfg.time_steps
    times = time_grid(spec.horizon_T, dt)
    u = _terminal_batch(spec, x)
    slices = [sample(grid, spec.terminal_U, spec.lipschitz_M)]
    ops_next = fdcore.control_ops(spec, times[0], x, controls)
    for i in range(1, len(times)):
        t = times[i]
        step_len = times[i - 1] - times[i]
        lo, dg, up, ell = fdcore.control_ops(spec, t, x, controls)
        if cfg.theta < 1.0:
            lo_n, dg_n, up_n, ell_n = ops_next
            explicit = fdcore.apply_tridiag(lo_n, dg_n, up_n, u) - ell_n
            ell_eff = cfg.theta * ell - (1.0 - cfg.theta) * explicit
            lo_eff, dg_eff, up_eff = cfg.theta * lo, cfg.theta * dg, cfg.theta * up
        else:
            lo_eff, dg_eff, up_eff, ell_eff = lo, dg, up, ell
        f_vals = _obstacle_batch(spec, t, x)
        solver = fdcore.howard_solve if cfg.method == "policy" else fdcore.psor_solve
        u, _iters = solver(
            lo_eff, dg_eff, up_eff, ell_eff, u, f_vals, step_len, cfg.psor_tol, cfg.psor_max_iters
        )
        slices.append(GridFunction(grid, u, max(measured_lip(grid, u), spec.lipschitz_M)))
        ops_next = (lo, dg, up, ell)
    return SchemeSolution(spec, dt, times, slices)


def fd_vi_solve(spec: ProblemSpec, cfg: FDSolverConfig) -> SchemeSolution:
    """Implicit FD solution of the obstacle problem with the control sup
    discretized over a dense symmetric control grid."""
    q_max = cfg.q_max if cfg.q_max is not None else effective_control_bound(spec)
    controls = [np.array([q]) for q in np.linspace(-q_max, q_max, cfg.n_controls)]
    return _fd_march(spec, controls, cfg)


def fd_hjb_finite_controls(spec: ProblemSpec, controls: ControlSet, cfg: FDSolverConfig) -> SchemeSolution:
    """Same machinery with the control sup restricted to a finite set."""
    return _fd_march(spec, controls.as_arrays(), cfg)


def fd_step_residual(spec: ProblemSpec, sol: SchemeSolution, controls, i: int) -> float:
    """Complementarity defect of stored FD slices at step index i >= 1."""
    x = sol.grid.axis(0)
    t = sol.times[i]
    dt = sol.times[i - 1] - sol.times[i]
    lo, dg, up, ell = fdcore.control_ops(spec, t, x, controls)
    f_vals = _obstacle_batch(spec, t, x)
    return fdcore.complementarity_residual(
        lo, dg, up, ell, sol.slices[i].values.ravel(), sol.slices[i - 1].values.ravel(), f_vals, dt
    )


def mc_expectation(spec: ProblemSpec, t, y, dt, phi: GridFunction, n_samples: int, seed: int):
    """Sample mean and standard error of phi along the one-step frozen SDE.

    Bit-for-bit reproducible for a fixed seed.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    rng = np.random.default_rng(seed)
    pts, _ = spec._points(y)
    b = spec.drift_at(t, pts)[0]
    s = spec.sigma_at(t, pts)[0]
    xi = rng.standard_normal((n_samples, spec.noise_dim))
    base = pts[0] + b * dt
    shifted = base[None, :] + np.sqrt(dt) * xi @ s.T
    vals = phi.eval(shifted)
    mean = float(np.mean(vals))
    std_error = float(np.std(vals, ddof=1) / np.sqrt(n_samples))
    return mean, std_error
