"""Reference solvers: transform oracle, FD complementarity solvers, MC."""

import numpy as np
import pytest

from splitvi import (
    ControlSet,
    FDSolverConfig,
    ProblemSpec,
    QuadraticIso,
    SpatialGrid,
    UnsupportedProblem,
    cole_hopf_reference,
    fd_hjb_finite_controls,
    fd_vi_solve,
    mc_expectation,
    sample,
)
from splitvi import fdcore
from splitvi.reference import fd_step_residual


def cone(x):
    return np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0)


def capped_obstacle(t, x):
    return np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)


def make_spec(sigma=0.5, drift=0.0, c=1.0, obstacle=None, terminal=None, T=0.5, M=1.2):
    return ProblemSpec(
        dim=1,
        sigma=lambda t, x: sigma,
        drift_b=lambda t, x: drift,
        hamiltonian=QuadraticIso(c=c),
        obstacle_f=obstacle or (lambda t, x: 1e9),
        terminal_U=terminal or cone,
        horizon_T=T,
        lipschitz_M=M,
    )


def make_grid(n=161, half=4.0):
    return SpatialGrid(dim=1, lo=np.array([-half]), hi=np.array([half]), points_per_axis=n)


class TestColeHopf:
    def test_constant_terminal(self):
        spec = make_spec(terminal=lambda x: 0.0 * np.asarray(x, dtype=float) + 1.7, M=1.0)
        for t, x in [(0.0, 0.0), (0.25, -1.0), (0.5, 2.0)]:
            assert cole_hopf_reference(spec, t, x) == pytest.approx(1.7, abs=1e-12)

    def test_terminal_condition(self):
        spec = make_spec()
        for x in (-0.6, 0.0, 1.2):
            assert cole_hopf_reference(spec, spec.horizon_T, x) == pytest.approx(
                float(cone(x)), abs=1e-12
            )

    def test_against_monte_carlo(self):
        # value from 1e6 Gaussian draws of the log-expectation; delta-method
        # standard error on the log scale
        spec = make_spec(sigma=1.0, T=1.0)
        got = cole_hopf_reference(spec, 0.0, 0.0)
        rng = np.random.default_rng(123)
        w = rng.standard_normal(10**6)
        inner = np.exp(-cone(0.0 + 1.0 * w))  # a = sigma^2/c = 1
        mean = float(np.mean(inner))
        se = float(np.std(inner, ddof=1) / np.sqrt(10**6))
        mc_value = -np.log(mean)
        mc_se = se / mean
        assert abs(got - mc_value) <= 3 * mc_se

    def test_batch_agrees_with_scalar(self):
        spec = make_spec()
        xs = np.array([-1.0, 0.0, 0.5])
        batch = cole_hopf_reference(spec, 0.2, xs)
        singles = np.array([cole_hopf_reference(spec, 0.2, float(x)) for x in xs])
        assert batch == pytest.approx(singles, abs=0)

    def test_preconditions_enforced(self):
        with pytest.raises(UnsupportedProblem):
            cole_hopf_reference(make_spec(drift=0.5), 0.0, 0.0)
        with pytest.raises(UnsupportedProblem):
            cole_hopf_reference(make_spec(obstacle=capped_obstacle), 0.0, 0.0)
        spec2d = ProblemSpec(
            dim=2,
            sigma=lambda t, x: np.eye(2),
            drift_b=lambda t, x: np.zeros(2),
            hamiltonian=QuadraticIso(c=1.0),
            obstacle_f=lambda t, x: 1e9,
            terminal_U=lambda x: 0.0,
            horizon_T=1.0,
            lipschitz_M=1.0,
        )
        with pytest.raises(UnsupportedProblem):
            cole_hopf_reference(spec2d, 0.0, np.zeros(2))


def dense_policy_oracle(spec, grid, time_steps, controls, obstacle=True):
    """Independent obstacle-step oracle: dense-matrix policy iteration.

    Same discretization contract as the banded production path, written
    against plain numpy linear algebra.
    """
    x = grid.axis(0)
    n = len(x)
    h = x[1] - x[0]
    dt = spec.horizon_T / time_steps
    u = np.asarray(spec.terminal_U(x), dtype=float)
    out = [u.copy()]
    for step in range(time_steps):
        t = spec.horizon_T - (step + 1) * dt
        sig = float(spec.sigma_at(t, 0.0).reshape(-1)[0])
        b = float(spec.drift_at(t, 0.0).reshape(-1)[0])
        f = np.asarray(spec.obstacle_f(t, x), dtype=float) if obstacle else np.full(n, 1e9)
        mats, ells = [], []
        for q in controls:
            A = np.zeros((n, n))
            mu = b - q
            for i in range(n):
                im, ip = max(i - 1, 0), min(i + 1, n - 1)
                A[i, ip] += -sig**2 / (2 * h * h)
                A[i, im] += -sig**2 / (2 * h * h)
                A[i, i] += sig**2 / (h * h)
                if mu > 0:
                    A[i, ip] += -mu / h
                    A[i, i] += mu / h
                else:
                    A[i, im] += mu / h
                    A[i, i] += -mu / h
            mats.append(A)
            ells.append(q * q / (2.0 * spec.hamiltonian.c))
        u_new = u.copy()
        for _ in range(200):
            b_all = np.stack([(u_new - u) / dt + A @ u_new - e for A, e in zip(mats, ells)])
            c_star = np.argmax(b_all, axis=0)
            b_max = b_all[c_star, np.arange(n)]
            if np.max(np.abs(np.maximum(b_max, u_new - f))) <= 1e-11 * (1 + 1 / dt):
                break
            stop = (u_new - f) > b_max
            M = np.zeros((n, n))
            rhs = np.zeros(n)
            for i in range(n):
                if stop[i]:
                    M[i, i] = 1.0
                    rhs[i] = f[i]
                else:
                    M[i] = mats[c_star[i]][i]
                    M[i, i] += 1.0 / dt
                    rhs[i] = u[i] / dt + ells[c_star[i]]
            u_new = np.linalg.solve(M, rhs)
        u = u_new
        out.append(u.copy())
    return out


class TestFdVi:
    def test_constant_fixed_point(self):
        c = 1.3
        spec = make_spec(
            obstacle=lambda t, x: c + 0.0 * np.asarray(x, dtype=float),
            terminal=lambda x: c + 0.0 * np.asarray(x, dtype=float),
            M=1.0,
        )
        sol = fd_vi_solve(spec, FDSolverConfig(time_steps=10, grid=make_grid(81), n_controls=33, q_max=2.0))
        for sl in sol.slices:
            assert sl.values == pytest.approx(np.full(81, c), abs=1e-8)

    def test_complementarity_residual(self):
        spec = make_spec(obstacle=capped_obstacle)
        cfg = FDSolverConfig(time_steps=20, grid=make_grid(81), n_controls=33, q_max=3.0)
        sol = fd_vi_solve(spec, cfg)
        controls = [np.array([q]) for q in np.linspace(-3.0, 3.0, 33)]
        for i in (1, 10, 20):
            assert fd_step_residual(spec, sol, controls, i) <= cfg.psor_tol * (1 + 21 / 0.5) * 10
        # min-form complementarity: each node solves one branch
        x = sol.grid.axis(0)
        for i in (5, 15):
            t = sol.times[i]
            dt = sol.times[i - 1] - sol.times[i]
            lo, dg, up, ell = fdcore.control_ops(spec, t, x, controls)
            u, u_next = sol.slices[i].values.ravel(), sol.slices[i - 1].values.ravel()
            b_all = (u - u_next) / dt + fdcore.apply_tridiag(lo, dg, up, u) - ell
            b_max = np.max(b_all, axis=0)
            f = capped_obstacle(t, x)
            assert np.max(np.minimum(np.abs(b_max), np.abs(u - f))) <= 1e-7

    def test_obstacle_respected(self):
        spec = make_spec(obstacle=capped_obstacle)
        sol = fd_vi_solve(spec, FDSolverConfig(time_steps=20, grid=make_grid(81), n_controls=33, q_max=3.0))
        x = sol.grid.axis(0)
        for i, t in enumerate(sol.times):
            if i == 0:
                continue
            assert np.max(sol.slices[i].values.ravel() - capped_obstacle(t, x)) <= 1e-9

    def test_against_dense_policy_oracle(self):
        spec = make_spec(obstacle=capped_obstacle, T=0.25)
        grid = make_grid(61, 3.0)
        controls = np.linspace(-2.0, 2.0, 9)
        sol = fd_vi_solve(spec, FDSolverConfig(time_steps=10, grid=grid, n_controls=9, q_max=2.0))
        oracle = dense_policy_oracle(spec, grid, 10, controls)
        for i in range(11):
            assert sol.slices[i].values.ravel() == pytest.approx(oracle[i], abs=1e-8)

    def test_psor_fallback_matches_policy(self):
        spec = make_spec(obstacle=capped_obstacle, T=0.25)
        grid = make_grid(41, 3.0)
        a = fd_vi_solve(spec, FDSolverConfig(time_steps=5, grid=grid, n_controls=9, q_max=2.0))
        b = fd_vi_solve(
            spec, FDSolverConfig(time_steps=5, grid=grid, n_controls=9, q_max=2.0, method="psor")
        )
        for sa, sb in zip(a.slices, b.slices):
            assert sa.values == pytest.approx(sb.values, abs=1e-7)

    def test_2d_unsupported(self):
        spec2d = ProblemSpec(
            dim=2,
            sigma=lambda t, x: np.eye(2),
            drift_b=lambda t, x: np.zeros(2),
            hamiltonian=QuadraticIso(c=1.0),
            obstacle_f=lambda t, x: 1e9,
            terminal_U=lambda x: 0.0,
            horizon_T=1.0,
            lipschitz_M=1.0,
        )
        grid2d = SpatialGrid(dim=2, lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 1.0]), points_per_axis=5)
        with pytest.raises(UnsupportedProblem):
            fd_vi_solve(spec2d, FDSolverConfig(time_steps=5, grid=grid2d, q_max=1.0))


class TestFiniteControls:
    def test_single_zero_control_matches_dense_oracle(self):
        spec = make_spec(obstacle=capped_obstacle, T=0.25)
        grid = make_grid(61, 3.0)
        cfg = FDSolverConfig(time_steps=10, grid=grid)
        sol = fd_hjb_finite_controls(spec, ControlSet(((0.0,),)), cfg)
        oracle = dense_policy_oracle(spec, grid, 10, [0.0])
        for i in range(11):
            assert sol.slices[i].values.ravel() == pytest.approx(oracle[i], abs=1e-8)

    def test_nested_refinement_monotone(self):
        spec = make_spec(obstacle=capped_obstacle)
        grid = make_grid(81, 3.0)
        cfg = FDSolverConfig(time_steps=10, grid=grid)
        full = ControlSet.equally_spaced(5, 1.5)
        small = fd_hjb_finite_controls(spec, full.prefix(2), cfg)
        big = fd_hjb_finite_controls(spec, full, cfg)
        for ss, sb in zip(small.slices, big.slices):
            # richer control set lifts the sup, so the solution decreases
            assert np.max(sb.values - ss.values) <= 1e-9

    def test_approaches_dense_set(self):
        spec = make_spec(obstacle=capped_obstacle)
        grid = make_grid(81, 3.0)
        cfg = FDSolverConfig(time_steps=10, grid=grid, n_controls=65, q_max=1.5)
        dense = fd_vi_solve(spec, cfg)
        gaps = []
        for m in (3, 9, 33):
            controls = ControlSet(tuple((q,) for q in np.linspace(-1.5, 1.5, m)))
            um = fd_hjb_finite_controls(spec, controls, cfg)
            gaps.append(max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(um.slices, dense.slices)))
        assert gaps[0] >= gaps[1] >= gaps[2]
        assert gaps[2] <= 1e-3


class TestControlSet:
    def test_prefix_nesting(self):
        cs = ControlSet.equally_spaced(5, 2.0)
        assert set(cs.prefix(3).controls) <= set(cs.controls)
        assert len(cs.prefix(1)) == 1

    def test_equally_spaced_span(self):
        cs = ControlSet.equally_spaced(3, 1.5)
        vals = sorted(q[0] for q in cs.controls)
        assert vals == pytest.approx([-1.5, 0.0, 1.5])

    def test_prefix_bounds(self):
        cs = ControlSet.equally_spaced(3, 1.0)
        with pytest.raises(ValueError):
            cs.prefix(0)
        with pytest.raises(ValueError):
            cs.prefix(4)


class TestMcExpectation:
    def setup_method(self):
        self.spec = make_spec(sigma=0.5, drift=0.3, T=1.0)
        self.grid = make_grid(401, 6.0)

    def test_constant(self):
        phi = sample(self.grid, lambda x: 0.0 * x + 2.5, lip=0.0)
        mean, se = mc_expectation(self.spec, 0.1, 0.0, 0.05, phi, 2000, seed=0)
        assert mean == pytest.approx(2.5, abs=1e-12)
        assert se == 0.0

    def test_deterministic_dynamics(self):
        spec = make_spec(sigma=0.0, drift=0.3, T=1.0)
        phi = sample(self.grid, lambda x: np.asarray(x, dtype=float) ** 2 / 10.0, lip=1.2)
        mean, se = mc_expectation(spec, 0.1, 1.0, 0.05, phi, 2000, seed=0)
        assert mean == pytest.approx(phi.eval(1.0 + 0.3 * 0.05), abs=1e-12)
        assert se == 0.0

    def test_reproducible_bit_for_bit(self):
        phi = sample(self.grid, lambda x: np.sin(np.asarray(x, dtype=float)), lip=1.0)
        a = mc_expectation(self.spec, 0.1, 0.4, 0.03, phi, 5000, seed=42)
        b = mc_expectation(self.spec, 0.1, 0.4, 0.03, phi, 5000, seed=42)
        assert a == b
        c = mc_expectation(self.spec, 0.1, 0.4, 0.03, phi, 5000, seed=43)
        assert a != c

    def test_sample_floor(self):
        phi = sample(self.grid, lambda x: 0.0 * x, lip=0.0)
        with pytest.raises(ValueError):
            mc_expectation(self.spec, 0.1, 0.0, 0.05, phi, 10, seed=0)
