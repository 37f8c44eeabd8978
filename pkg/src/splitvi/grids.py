"""Truncated uniform grids and monotone piecewise-linear grid functions.

The solver works on a truncated box even though the underlying problem lives
on the whole space.  Values outside the box are obtained by clamping the
query point to the box (constant extrapolation), which keeps evaluation
monotone in the node values and uniformly bounded.  The truncation margin is
chosen by the harness so that clamping never pollutes the reporting region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite

# Test hook: when set, applied to interpolated value arrays before they are
# returned.  Lets the property suite run a negative control that breaks
# monotonicity on purpose.  Never set in production paths.
_EVAL_CORRUPTION = None


def set_eval_corruption(fn) -> None:
    global _EVAL_CORRUPTION
    _EVAL_CORRUPTION = fn


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform tensor grid on a box, dimension 1 or 2.

    ``h`` is derived per axis as (hi - lo) / (points_per_axis - 1).
    Node order is lexicographic by axis index (axis 0 slowest).
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    points_per_axis: int
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.points_per_axis < 3:
            raise ValueError("points_per_axis must be >= 3")
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("lo/hi must have shape (dim,)")
        if not np.all(lo < hi):
            raise ValueError("lo must be strictly below hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", (hi - lo) / (self.points_per_axis - 1))

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.points_per_axis**self.dim

    def axis(self, i: int) -> np.ndarray:
        return np.linspace(self.lo[i], self.hi[i], self.points_per_axis)

    def nodes(self) -> np.ndarray:
        """All nodes as an (n_nodes, dim) array in lexicographic order."""
        axes = [self.axis(i) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _as_points(grid: SpatialGrid, x) -> tuple[np.ndarray, bool]:
    """Normalize a query to shape (N, dim); returns (points, was_single)."""
    arr = np.asarray(x, dtype=float)
    if grid.dim == 1:
        if arr.ndim == 0:
            return arr.reshape(1, 1), True
        if arr.ndim == 1:
            return arr.reshape(-1, 1), False
        if arr.ndim == 2 and arr.shape[1] == 1:
            return arr, False
    else:
        if arr.ndim == 1 and arr.shape[0] == 2:
            return arr.reshape(1, 2), True
        if arr.ndim == 2 and arr.shape[1] == 2:
            return arr, False
    raise ValueError(f"cannot interpret query of shape {arr.shape} on a {grid.dim}D grid")


class GridFunction:
    """Scalar function sampled on a :class:`SpatialGrid`.

    ``lip_bound`` is the declared Lipschitz constant of the represented
    function; it must be honored by the node values (checked at
    construction) and travels with the function as regularity metadata.
    Instances are immutable after construction.
    """

    __slots__ = ("grid", "values", "lip_bound")

    def __init__(self, grid: SpatialGrid, values: np.ndarray, lip_bound: float):
        values = np.array(values, dtype=float)
        if values.shape == (grid.n_nodes,):
            values = values.reshape(grid.shape)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFinite("grid function values must be finite")
        self.grid = grid
        self.values = values
        self.values.flags.writeable = False
        self.lip_bound = float(lip_bound)
        self._check_lipschitz()

    def _check_lipschitz(self):
        for ax in range(self.grid.dim):
            step = np.abs(np.diff(self.values, axis=ax))
            if step.size and step.max() > self.lip_bound * self.grid.h[ax] + 1e-9:
                raise ValueError(
                    f"declared lip_bound {self.lip_bound} violated on axis {ax}: "
                    f"max adjacent slope {step.max() / self.grid.h[ax]:.6g}"
                )

    def measured_lip(self) -> float:
        """Largest adjacent-node slope actually present in the values."""
        out = 0.0
        for ax in range(self.grid.dim):
            step = np.abs(np.diff(self.values, axis=ax))
            if step.size:
                out = max(out, float(step.max() / self.grid.h[ax]))
        return out

    def eval(self, x):
        """Multilinear interpolation; clamped (constant) outside the box.

        Accepts a scalar (1D), a point of shape (dim,), or a batch (N, dim);
        returns a scalar or an (N,) array accordingly.  Interpolation weights
        are convex, so the result is monotone and 1-Lipschitz in the node
        values.
        """
        pts, single = _as_points(self.grid, x)
        g = self.grid
        idx = []
        wts = []
        for ax in range(g.dim):
            c = np.clip(pts[:, ax], g.lo[ax], g.hi[ax])
            pos = (c - g.lo[ax]) / g.h[ax]
            i = np.minimum(pos.astype(int), g.points_per_axis - 2)
            idx.append(i)
            wts.append(pos - i)
        if g.dim == 1:
            i = idx[0]
            w = wts[0]
            v = self.values
            out = (1.0 - w) * v[i] + w * v[i + 1]
        else:
            i, j = idx
            wi, wj = wts
            v = self.values
            out = (1.0 - wi) * ((1.0 - wj) * v[i, j] + wj * v[i, j + 1]) + wi * (
                (1.0 - wj) * v[i + 1, j] + wj * v[i + 1, j + 1]
            )
        if _EVAL_CORRUPTION is not None:
            out = _EVAL_CORRUPTION(out)
        return float(out[0]) if single else out

    def shifted(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values + c, self.lip_bound)

    def __repr__(self):
        return f"GridFunction(shape={self.values.shape}, lip={self.lip_bound:.4g})"


def measured_lip(grid: SpatialGrid, values: np.ndarray) -> float:
    """Largest adjacent-node slope of raw values on ``grid``."""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    out = 0.0
    for ax in range(grid.dim):
        step = np.abs(np.diff(values, axis=ax))
        if step.size:
            out = max(out, float(step.max() / grid.h[ax]))
    return out


def sample(grid: SpatialGrid, f, lip: float) -> GridFunction:
    """Sample ``f`` at every node of ``grid`` with declared constant ``lip``.

    ``f`` takes a point (scalar in 1D or shape-(dim,) array); callables that
    accept a whole (N, dim) batch are used directly when they return the
    right shape.  Raises :class:`NonFinite` if any node value is not finite.
    """
    pts = grid.nodes()
    vals = None
    try:
        cand = np.asarray(f(pts[:, 0] if grid.dim == 1 else pts), dtype=float)
        if cand.shape == (grid.n_nodes,):
            vals = cand
    except Exception:
        vals = None
    if vals is None:
        vals = np.empty(grid.n_nodes)
        for k in range(grid.n_nodes):
            arg = pts[k, 0] if grid.dim == 1 else pts[k]
            vals[k] = f(arg)
    if not np.all(np.isfinite(vals)):
        raise NonFinite("sampled function produced non-finite values")
    return GridFunction(grid, vals, lip)


def write_csv(path, gf: GridFunction) -> None:
    """One row per node, coordinates then value, lexicographic node order."""
    pts = gf.grid.nodes()
    flat = gf.values.ravel()
    cols = [f"x{i}" for i in range(gf.grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(pts.shape[0]):
            coords = ",".join(f"{c:.12e}" for c in pts[k])
            fh.write(f"{coords},{flat[k]:.12e}\n")
