"""Time marching with the obstacle cap, solution interpolation, residual."""

import numpy as np
import pytest

from splitvi import (
    OperatorConfig,
    OutOfRange,
    ProblemSpec,
    QuadraticIso,
    SpatialGrid,
    gauss_hermite,
    residual,
    sample,
    solve,
    step,
)
from splitvi.backward import apply, apply_slice
from splitvi.grids import GridFunction, measured_lip
from splitvi.scheme import obstacle_cap_defect, sup_bound_budget, time_grid


def make_spec(obstacle=None, terminal=None, sigma=0.4, T=0.5, M=1.2):
    return ProblemSpec(
        dim=1,
        sigma=lambda t, x: sigma,
        drift_b=lambda t, x: 0.0,
        hamiltonian=QuadraticIso(c=1.0),
        obstacle_f=obstacle or (lambda t, x: 1e9),
        terminal_U=terminal or (lambda x: np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0)),
        horizon_T=T,
        lipschitz_M=M,
    )


def make_grid(n=81, half=4.0):
    return SpatialGrid(dim=1, lo=np.array([-half]), hi=np.array([half]), points_per_axis=n)


def make_cfg(q_max=3.6):
    return OperatorConfig(quad=gauss_hermite(7, 1), q_max=q_max)


class TestTimeGrid:
    def test_exact_multiple(self):
        times = time_grid(1.0, 0.05)
        assert len(times) == 21
        assert times[0] == 1.0 and times[-1] == 0.0
        assert np.allclose(np.diff(times), -0.05)

    def test_single_step(self):
        times = time_grid(0.5, 0.5)
        assert times == pytest.approx([0.5, 0.0])

    def test_leftover_kept(self):
        times = time_grid(1.0, 0.3)  # leftover 0.1 >= dt/10
        assert times == pytest.approx([1.0, 0.7, 0.4, 0.1, 0.0])

    def test_leftover_merged(self):
        times = time_grid(1.02, 0.5)  # leftover 0.02 < dt/10: merged
        assert times == pytest.approx([1.02, 0.52, 0.0])


class TestStep:
    def test_huge_obstacle_is_identity(self):
        spec = make_spec()
        grid = make_grid()
        cfg = make_cfg()
        phi = sample(grid, spec.terminal_U, 1.0)
        out = step(spec, 0.3, 0.05, phi, cfg)
        op = apply_slice(spec, 0.3, 0.05, phi, cfg)
        assert np.array_equal(out.values, op.values)

    def test_binding_obstacle(self):
        spec = make_spec(obstacle=lambda t, x: 4.0 + 0.0 * np.asarray(x, dtype=float))
        grid = make_grid()
        cfg = make_cfg()
        phi = sample(grid, lambda x: 0.0 * x + 5.0, lip=0.0)
        out = step(spec, 0.3, 0.05, phi, cfg)
        # operator returns 5, obstacle 4 binds
        assert out.values == pytest.approx(np.full(81, 4.0), abs=1e-12)

    def test_constant_fixed_point(self):
        c = 2.0
        spec = make_spec(
            obstacle=lambda t, x: c + 0.0 * np.asarray(x, dtype=float),
            terminal=lambda x: c + 0.0 * np.asarray(x, dtype=float),
            M=1.0,
        )
        grid = make_grid()
        sol = solve(spec, 0.1, grid, make_cfg(2.0))
        for sl in sol.slices:
            assert sl.values == pytest.approx(np.full(81, c), abs=1e-9)


class TestSolve:
    def test_single_step_structure(self):
        spec = make_spec(T=0.5)
        grid = make_grid()
        cfg = make_cfg()
        sol = solve(spec, 0.5, grid, cfg)
        assert len(sol.times) == 2
        assert sol.times == pytest.approx([0.5, 0.0])
        term = sample(grid, spec.terminal_U, spec.lipschitz_M)
        assert np.array_equal(sol.slices[0].values, term.values)
        op = apply_slice(spec, 0.0, 0.5, term, cfg)
        f0 = sample(grid, lambda x: spec.obstacle_f(0.0, x), spec.lipschitz_M)
        assert np.array_equal(sol.slices[1].values, np.minimum(op.values, f0.values))

    def test_monotone_in_obstacle(self):
        grid = make_grid()
        cfg = make_cfg()
        f1 = lambda t, x: np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)
        f2 = lambda t, x: np.minimum(0.20 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.6)
        sol1 = solve(make_spec(obstacle=f1), 0.1, grid, cfg)
        sol2 = solve(make_spec(obstacle=f2), 0.1, grid, cfg)
        for s1, s2 in zip(sol1.slices, sol2.slices):
            assert np.max(s1.values - s2.values) <= 1e-10

    def test_obstacle_cap_holds(self):
        spec = make_spec(
            obstacle=lambda t, x: np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)
        )
        sol = solve(spec, 0.05, make_grid(), make_cfg())
        assert obstacle_cap_defect(sol) <= 1e-10

    def test_uniform_bound(self):
        spec = make_spec(
            obstacle=lambda t, x: np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)
        )
        sol = solve(spec, 0.05, make_grid(), make_cfg())
        budget = sup_bound_budget(sol)
        assert max(float(np.max(np.abs(sl.values))) for sl in sol.slices) <= budget + 1e-9


class TestEvalSolution:
    def setup_method(self):
        self.spec = make_spec(
            obstacle=lambda t, x: np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)
        )
        self.grid = make_grid()
        self.cfg = make_cfg()
        self.sol = solve(self.spec, 0.1, self.grid, self.cfg)

    def test_terminal_weights(self):
        for x in (-0.7, 0.0, 1.3):
            assert self.sol.eval(0.5, x) == pytest.approx(self.spec.terminal_U(x), abs=1e-12)

    def test_first_step_weights(self):
        x = 0.3
        want = self.sol.slices[1].eval(x)
        assert self.sol.eval(0.4, x) == pytest.approx(want, abs=1e-12)

    def test_midpoint_average(self):
        x = -0.2
        lo = self.sol.slices[1].eval(x)
        hi = self.sol.slices[0].eval(x)
        assert self.sol.eval(0.45, x) == pytest.approx((lo + hi) / 2.0, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            self.sol.eval(-0.2, 0.0)
        with pytest.raises(OutOfRange):
            self.sol.eval(0.61, 0.0)

    def test_csv_deterministic(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        self.sol.to_csv(p1)
        self.sol.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        header = p1.read_text().splitlines()[0]
        assert header == "t,x0,value"


class TestResidual:
    def setup_method(self):
        self.spec = make_spec(
            obstacle=lambda t, x: np.minimum(0.10 + 1.2 * np.abs(np.asarray(x, dtype=float)), 1.5)
        )
        self.grid = make_grid()
        self.cfg = make_cfg()

    def test_zero_at_operator_fixed_point(self):
        phi = sample(self.grid, self.spec.terminal_U, 1.0)
        x = 2.2  # obstacle slack here
        value, _ = apply(self.spec, 0.3, 0.05, phi, x, self.cfg)
        assert value <= self.spec.obstacle_f(0.3, x)
        assert residual(self.spec, 0.05, 0.3, x, value, phi, self.cfg) == 0.0

    def test_zero_at_obstacle_fixed_point(self):
        phi = sample(self.grid, lambda x: 0.0 * x + 0.5, lip=0.0)
        x = 0.0  # obstacle binds here: f = 0.10 while the operator returns ~0.5
        value, _ = apply(self.spec, 0.3, 0.05, phi, x, self.cfg)
        f = float(self.spec.obstacle_f(0.3, x))
        assert f < value
        assert residual(self.spec, 0.05, 0.3, x, f, phi, self.cfg) == 0.0

    def test_fixed_point_identity_everywhere(self):
        sol = solve(self.spec, 0.1, self.grid, self.cfg)
        worst = 0.0
        for i in range(1, len(sol.times)):
            t = sol.times[i]
            dt = sol.times[i - 1] - sol.times[i]
            for j in (0, 20, 40, 60, 80):
                x = float(self.grid.axis(0)[j])
                p = float(sol.slices[i].values.ravel()[j])
                worst = max(worst, abs(residual(self.spec, dt, t, x, p, sol.slices[i - 1], self.cfg)))
        assert worst <= 1e-9

    def test_monotonicity_inequality(self):
        # shifted residual dominates: for v' <= v,
        #   residual(p + c1, v' + c2) >= residual(p, v) + min{(c1 - c2)/dt, c1}
        rng = np.random.default_rng(9)
        phi_vals = sample(self.grid, self.spec.terminal_U, 1.0)
        dt, t = 0.05, 0.2
        for _ in range(20):
            c1 = float(rng.uniform(-1, 1))
            c2 = float(rng.uniform(-1, 1))
            drop = rng.uniform(0.0, 0.5)
            v_low = GridFunction(
                self.grid, phi_vals.values - drop, phi_vals.lip_bound
            )
            x = float(rng.uniform(-2, 2))
            p = float(rng.uniform(-1, 1))
            lhs = residual(self.spec, dt, t, x, p + c1, v_low.shifted(c2), self.cfg)
            rhs = residual(self.spec, dt, t, x, p, phi_vals, self.cfg) + min((c1 - c2) / dt, c1)
            assert lhs >= rhs - 1e-9
