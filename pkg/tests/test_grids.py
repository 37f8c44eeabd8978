"""Grids, interpolation/extrapolation, sampling, CSV export."""

import numpy as np
import pytest

from splitvi import GridFunction, NonFinite, SpatialGrid, sample
from splitvi.grids import measured_lip, write_csv


def grid1d(lo=-1.0, hi=1.0, n=3):
    return SpatialGrid(dim=1, lo=np.array([lo]), hi=np.array([hi]), points_per_axis=n)


class TestSpatialGrid:
    def test_spacing(self):
        g = grid1d(0.0, 1.0, 5)
        assert g.h == pytest.approx([0.25])

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            grid1d(1.0, -1.0, 5)
        with pytest.raises(ValueError):
            grid1d(0.0, 1.0, 2)

    def test_nodes_lexicographic_2d(self):
        g = SpatialGrid(dim=2, lo=np.array([0.0, 10.0]), hi=np.array([1.0, 11.0]), points_per_axis=3)
        pts = g.nodes()
        assert pts.shape == (9, 2)
        # axis 0 slowest
        assert pts[0] == pytest.approx([0.0, 10.0])
        assert pts[1] == pytest.approx([0.0, 10.5])
        assert pts[3] == pytest.approx([0.5, 10.0])


class TestEval:
    def test_node_coincident(self):
        g = grid1d(0.0, 1.0, 5)
        gf = GridFunction(g, np.array([1.0, 2.0, 0.5, 3.0, -1.0]), lip_bound=20.0)
        for i, x in enumerate(g.axis(0)):
            assert gf.eval(float(x)) == pytest.approx(gf.values[i], abs=1e-14)

    def test_constant(self):
        g = grid1d()
        gf = GridFunction(g, np.full(3, 4.2), lip_bound=0.0)
        for x in (-5.0, -1.0, 0.3, 1.0, 7.0):
            assert gf.eval(x) == pytest.approx(4.2, abs=0)

    def test_linear_reproduction(self):
        g = grid1d(0.0, 1.0, 3)  # spacing 0.5
        gf = GridFunction(g, g.axis(0), lip_bound=1.0)
        assert gf.eval(0.25) == pytest.approx(0.25, abs=1e-15)

    def test_clamped_outside(self):
        g = grid1d(0.0, 1.0, 3)
        gf = GridFunction(g, np.array([5.0, 1.0, 2.0]), lip_bound=10.0)
        assert gf.eval(-100.0) == pytest.approx(5.0)
        assert gf.eval(100.0) == pytest.approx(2.0)

    def test_bilinear_2d(self):
        g = SpatialGrid(dim=2, lo=np.zeros(2), hi=np.ones(2), points_per_axis=3)
        gf = sample(g, lambda x: 2.0 * x[..., 0] + 3.0 * x[..., 1], lip=4.0)
        assert gf.eval(np.array([0.3, 0.7])) == pytest.approx(2.0 * 0.3 + 3.0 * 0.7, abs=1e-14)
        assert gf.eval(np.array([-1.0, 0.5])) == pytest.approx(1.5, abs=1e-14)

    def test_batch_matches_scalar(self):
        g = grid1d(-2.0, 2.0, 9)
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(9)
        gf = GridFunction(g, vals, lip_bound=measured_lip(g, vals) + 1e-12)
        xs = rng.uniform(-3, 3, size=17)
        batch = gf.eval(xs)
        singles = np.array([gf.eval(float(x)) for x in xs])
        assert batch == pytest.approx(singles, abs=0)


class TestEvalProperties:
    def test_monotone_in_node_values(self):
        rng = np.random.default_rng(1)
        g = grid1d(-2.0, 2.0, 21)
        for _ in range(25):
            v1 = rng.standard_normal(21)
            v2 = v1 + rng.uniform(0.0, 1.0, size=21)
            g1 = GridFunction(g, v1, measured_lip(g, v1) + 1e-12)
            g2 = GridFunction(g, v2, measured_lip(g, v2) + 1e-12)
            xs = rng.uniform(-3, 3, size=11)
            assert np.all(g1.eval(xs) <= g2.eval(xs) + 1e-15)

    def test_shift_equivariance_exact(self):
        rng = np.random.default_rng(2)
        g = grid1d(-1.0, 1.0, 11)
        v = rng.standard_normal(11)
        gf = GridFunction(g, v, measured_lip(g, v) + 1e-12)
        xs = rng.uniform(-2, 2, size=9)
        base = gf.eval(xs)
        for c in (0.5, -3.0):
            shifted = gf.shifted(c).eval(xs)
            assert np.max(np.abs(shifted - (base + c))) <= 1e-12

    def test_one_lipschitz_in_sup_norm(self):
        rng = np.random.default_rng(3)
        g = grid1d(-1.0, 1.0, 11)
        v1 = rng.standard_normal(11)
        v2 = v1 + rng.uniform(-0.5, 0.5, size=11)
        g1 = GridFunction(g, v1, measured_lip(g, v1) + 1e-12)
        g2 = GridFunction(g, v2, measured_lip(g, v2) + 1e-12)
        xs = rng.uniform(-2, 2, size=50)
        assert np.max(np.abs(g1.eval(xs) - g2.eval(xs))) <= np.max(np.abs(v1 - v2)) + 1e-15


class TestSample:
    def test_terminal_slice(self):
        g = grid1d(-1.0, 1.0, 3)
        gf = sample(g, lambda x: np.abs(x), lip=1.0)
        assert gf.values == pytest.approx([1.0, 0.0, 1.0])

    def test_zero(self):
        g = grid1d()
        gf = sample(g, lambda x: 0.0 * x, lip=0.0)
        assert np.all(gf.values == 0.0)

    def test_non_finite_rejected(self):
        g = grid1d()
        with pytest.raises(NonFinite):
            sample(g, lambda x: np.where(np.asarray(x) > 0, np.inf, 0.0), lip=1.0)

    def test_scalar_only_callable(self):
        import math

        g = grid1d(0.0, 1.0, 5)
        gf = sample(g, lambda x: math.sin(x), lip=1.0)
        assert gf.values == pytest.approx(np.sin(g.axis(0)))

    def test_declared_lip_validated(self):
        g = grid1d(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            sample(g, lambda x: 10.0 * np.asarray(x), lip=1.0)


class TestCsv:
    def test_format_and_determinism(self, tmp_path):
        g = grid1d(0.0, 1.0, 3)
        gf = GridFunction(g, np.array([1.0, 2.0, 3.0]), lip_bound=4.0)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, gf)
        write_csv(p2, gf)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert lines[0] == "x0,value"
        assert len(lines) == 4
        # scientific notation with at least 12 significant digits
        assert "e" in lines[1].split(",")[1]
        mantissa = lines[1].split(",")[1].split("e")[0]
        assert len(mantissa.replace("-", "").replace(".", "")) >= 12
