"""Problem coefficients, Hamiltonian kinds, and the convex dual.

The running-cost function used by the control reformulation is the convex
conjugate of the Hamiltonian in its gradient slot,

    L(t, x, q) = sup_p { p.q - H(t, x, p) },

which is finite for every q exactly because H grows superlinearly.  Three
Hamiltonian kinds are supported so that experiment configs can name them
without carrying code: an isotropic quadratic c|p|^2/2 (dual solved in
closed form), an isotropic even power c|p|^m/m (dual solved by a
safeguarded scalar maximization along the ray through q), and a tabulated
convex evaluator with a declared superlinear-growth certificate (dual
solved by a multi-start ascent over an expanding box).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NonConvergence
from .grids import SpatialGrid

# Relative tolerance for numerically solved dual values.  The scheme's error
# floor must sit far below the coarsest time-step scale being measured.
DUAL_REL_TOL = 1e-10

_BRACKET_DOUBLINGS = 200


@dataclass(frozen=True)
class QuadraticIso:
    """H(t,x,p) = c|p|^2/2 with c > 0."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("quadratic coefficient must be positive")

    def value(self, t, x, p):
        p = np.asarray(p, dtype=float)
        return self.c * float(np.dot(p, p)) / 2.0

    def radial(self, t, x, r):
        return self.c * r * r / 2.0


@dataclass(frozen=True)
class PowerIso:
    """H(t,x,p) = c|p|^m/m with even integer m >= 2 and c > 0."""

    m: int
    c: float

    def __post_init__(self):
        if self.m < 2 or self.m % 2 != 0:
            raise ValueError("power must be an even integer >= 2")
        if self.c <= 0:
            raise ValueError("power coefficient must be positive")

    def value(self, t, x, p):
        p = np.asarray(p, dtype=float)
        r = float(np.linalg.norm(p))
        return self.c * r**self.m / self.m

    def radial(self, t, x, r):
        return self.c * r**self.m / self.m


@dataclass(frozen=True)
class TabulatedConvex:
    """Black-box convex coercive Hamiltonian ``h(t, x, p) -> float``.

    ``growth`` = (coeff, exponent, offset) certifies
    h(t,x,p) >= coeff*|p|**exponent - offset with exponent > 1; it bounds
    the search box of the dual ascent.  The certificate is declared, not
    proven: `probe_coercive` spot-checks it along rays.
    """

    h: Callable
    growth: tuple = (0.5, 2.0, 0.0)

    def __post_init__(self):
        coeff, exponent, offset = self.growth
        if coeff <= 0 or exponent <= 1.0:
            raise ValueError("growth certificate needs coeff > 0 and exponent > 1")

    def value(self, t, x, p):
        return float(self.h(t, x, np.asarray(p, dtype=float)))


HamiltonianKind = QuadraticIso | PowerIso | TabulatedConvex


@dataclass(frozen=True)
class DualEvaluation:
    """Result of one conjugate evaluation: L value, attaining p, diagnostics."""

    value_L: float
    argmax_p: np.ndarray
    iterations: int
    converged: bool


@dataclass
class ProblemSpec:
    """Coefficients and data of one obstacle problem.

    ``sigma(t, x)`` returns the (dim x noise_dim) diffusion matrix (scalars
    accepted in 1D), ``drift_b(t, x)`` the drift vector, ``obstacle_f(t, x)``
    and ``terminal_U(x)`` scalars.  ``lipschitz_M`` is the shared bound on
    the data seminorms; the obstacle must dominate the terminal datum at
    time ``horizon_T``.
    """

    dim: int
    sigma: Callable
    drift_b: Callable
    hamiltonian: HamiltonianKind
    obstacle_f: Callable
    terminal_U: Callable
    horizon_T: float
    lipschitz_M: float
    noise_dim: int = field(default=0)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be positive")
        if self.lipschitz_M <= 0:
            raise ValueError("lipschitz_M must be positive")
        if self.noise_dim == 0:
            self.noise_dim = self.dim

    # Coefficient access, normalized to fixed shapes.  A batch argument of
    # shape (N, dim) is offered to the callable first; a per-point fallback
    # keeps arbitrary scalar callables usable.

    def _points(self, x):
        arr = np.asarray(x, dtype=float)
        if self.dim == 1:
            if arr.ndim == 0:
                return arr.reshape(1, 1), True
            return arr.reshape(-1, 1), False
        if arr.ndim == 1 and arr.shape == (2,):
            return arr.reshape(1, 2), True
        return arr.reshape(-1, 2), False

    def sigma_at(self, t, x):
        pts, single = self._points(x)
        out = self._eval_coeff(self.sigma, t, pts, (self.dim, self.noise_dim))
        return out[0] if single else out

    def drift_at(self, t, x):
        pts, single = self._points(x)
        out = self._eval_coeff(self.drift_b, t, pts, (self.dim,))
        return out[0] if single else out

    def _eval_coeff(self, fn, t, pts, tail_shape):
        n = pts.shape[0]
        want = (n,) + tail_shape
        try:
            arg = pts[:, 0] if self.dim == 1 else pts
            got = np.asarray(fn(t, arg), dtype=float)
            cand = self._broadcast_coeff(got, n, tail_shape)
            if cand is not None:
                return cand
        except Exception:
            pass
        out = np.empty(want)
        for k in range(n):
            arg = pts[k, 0] if self.dim == 1 else pts[k]
            got = np.asarray(fn(t, arg), dtype=float)
            out[k] = got.reshape(tail_shape) if got.shape != tail_shape else got
        return out

    @staticmethod
    def _broadcast_coeff(got, n, tail_shape):
        want = (n,) + tail_shape
        if got.shape == want:
            return got
        if got.ndim == 0:
            return np.full(want, float(got))
        if got.shape == (n,) and len(tail_shape) >= 1 and all(s == 1 for s in tail_shape):
            return got.reshape(want)
        # (n,) drift in 1D, or (n,) sigma in 1D with noise_dim 1
        if got.shape == (n,) and tail_shape in ((1,), (1, 1)):
            return got.reshape(want)
        return None

    def h0_at(self, t, x):
        """H(t, x, 0)."""
        return eval_hamiltonian(self, t, x, np.zeros(self.dim))

    def validate_data(self, grid: SpatialGrid, n_times: int = 5) -> None:
        """Check f(T, .) >= U and finiteness of the data on grid samples."""
        pts = grid.nodes()
        T = self.horizon_T
        for k in range(pts.shape[0]):
            arg = pts[k, 0] if self.dim == 1 else pts[k]
            u = self.terminal_U(arg)
            fT = self.obstacle_f(T, arg)
            if not np.isfinite(u):
                raise ValueError("terminal datum not finite on the grid")
            if fT < u - 1e-12:
                raise ValueError(
                    f"obstacle below terminal datum at x={arg}: f(T)={fT}, U={u}"
                )
        for t in np.linspace(0.0, T, n_times):
            s = self.sigma_at(t, pts[:: max(1, pts.shape[0] // 16)])
            b = self.drift_at(t, pts[:: max(1, pts.shape[0] // 16)])
            if not (np.all(np.isfinite(s)) and np.all(np.isfinite(b))):
                raise ValueError("coefficients not finite on the grid")


def eval_hamiltonian(spec: ProblemSpec, t, x, p) -> float:
    """H(t, x, p); total over finite inputs."""
    return spec.hamiltonian.value(t, x, np.asarray(p, dtype=float))


def _radial_dual(kind, t, x, qnorm):
    """Maximize r*|q| - h(r) over r >= 0 for an isotropic kind.

    Brackets the maximizer by doubling, then refines with bounded Brent.
    """
    g = lambda r: qnorm * r - kind.radial(t, x, r)
    hi = 1.0
    best = g(hi)
    n_doublings = 0
    while g(2.0 * hi) > best and n_doublings < _BRACKET_DOUBLINGS:
        hi *= 2.0
        best = g(hi)
        n_doublings += 1
    if n_doublings >= _BRACKET_DOUBLINGS:
        raise NonConvergence(
            "dual maximizer bracket did not close; Hamiltonian appears non-coercive"
        )
    res = minimize_scalar(
        lambda r: -g(r),
        bounds=(0.0, 2.0 * hi),
        method="bounded",
        options={"xatol": DUAL_REL_TOL * (1.0 + 2.0 * hi), "maxiter": 500},
    )
    r_star = float(res.x)
    val = g(r_star)
    # the bracket endpoints are candidates too
    for r in (0.0, hi, 2.0 * hi):
        v = g(r)
        if v > val:
            val, r_star = v, r
    return val, r_star, int(res.nfev) + n_doublings, bool(res.success)


def _tabulated_dual(kind: TabulatedConvex, spec: ProblemSpec, t, x, q):
    """Multi-start ascent of p.q - H over an expanding certificate box."""
    coeff, exponent, offset = kind.growth
    h0 = kind.value(t, x, np.zeros(spec.dim))
    qnorm = float(np.linalg.norm(q))
    radius = max(
        1.0, ((qnorm + 1.0 + abs(offset) + abs(h0)) / coeff) ** (1.0 / (exponent - 1.0))
    )
    g = lambda p: float(np.dot(p, q)) - kind.value(t, x, p)
    total_evals = 0
    for expansion in range(_BRACKET_DOUBLINGS // 4):
        n_coarse = 33
        axes = [np.linspace(-radius, radius, n_coarse) for _ in range(spec.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.array([g(p) for p in cand])
        total_evals += len(vals)
        order = np.argsort(-vals, kind="stable")
        starts = cand[order[:3]]
        best_val, best_p = -np.inf, None
        step0 = 2.0 * radius / (n_coarse - 1)
        for p0 in starts:
            p_cur = p0.copy()
            v_cur = g(p_cur)
            for _sweep in range(3):
                for ax in range(spec.dim):
                    lo_b = max(p_cur[ax] - step0, -radius)
                    hi_b = min(p_cur[ax] + step0, radius)

                    def g_ax(s, ax=ax, p=p_cur):
                        pp = p.copy()
                        pp[ax] = s
                        return g(pp)

                    res = minimize_scalar(
                        lambda s: -g_ax(s),
                        bounds=(lo_b, hi_b),
                        method="bounded",
                        options={"xatol": DUAL_REL_TOL * (1.0 + radius), "maxiter": 200},
                    )
                    total_evals += int(res.nfev)
                    if -res.fun > v_cur:
                        p_cur[ax] = float(res.x)
                        v_cur = -float(res.fun)
            if v_cur > best_val:
                best_val, best_p = v_cur, p_cur.copy()
        if float(np.max(np.abs(best_p))) < radius * (1.0 - 1e-6):
            return best_val, best_p, total_evals, True
        radius *= 2.0
    raise NonConvergence(
        "dual ascent kept saturating its search box; growth certificate appears false"
    )


def legendre(spec: ProblemSpec, t, x, q) -> DualEvaluation:
    """Convex conjugate L(t,x,q) = sup_p {p.q - H(t,x,p)} with its argmax.

    Closed form for the quadratic kind; numeric to relative tolerance
    ``DUAL_REL_TOL`` otherwise.  Raises :class:`NonConvergence` when the
    ascent cannot bracket a maximizer (non-coercive input).
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    kind = spec.hamiltonian
    if isinstance(kind, QuadraticIso):
        val = float(np.dot(q, q)) / (2.0 * kind.c)
        return DualEvaluation(val, q / kind.c, 0, True)
    if isinstance(kind, PowerIso):
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            return DualEvaluation(0.0, np.zeros(spec.dim), 0, True)
        val, r_star, nit, ok = _radial_dual(kind, t, x, qnorm)
        return DualEvaluation(val, (r_star / qnorm) * q, nit, ok)
    val, p_star, nit, ok = _tabulated_dual(kind, spec, t, x, q)
    return DualEvaluation(val, p_star, nit, ok)


def legendre_values(spec: ProblemSpec, t, x, q_batch) -> np.ndarray:
    """Dual values for a batch of q's (shape (N, dim)).

    ``x`` is a single point or an (N, dim) batch aligned with ``q_batch``
    (only x-dependent kinds look at it).  Vectorized closed form for the
    quadratic kind, scalar fallback otherwise.
    """
    q = np.asarray(q_batch, dtype=float).reshape(-1, spec.dim)
    kind = spec.hamiltonian
    if isinstance(kind, QuadraticIso):
        acc = q[:, 0] * q[:, 0]
        for ax in range(1, spec.dim):
            acc = acc + q[:, ax] * q[:, ax]
        return acc / (2.0 * kind.c)
    xs = np.asarray(x, dtype=float).reshape(-1, spec.dim)
    out = np.empty(q.shape[0])
    for k in range(q.shape[0]):
        xk = xs[k] if xs.shape[0] == q.shape[0] else xs[0]
        arg = xk[0] if spec.dim == 1 else xk
        out[k] = legendre(spec, t, arg, q[k]).value_L
    return out


def grad_hamiltonian_fd(spec: ProblemSpec, t, x, p, step=1e-6) -> np.ndarray:
    """Central finite-difference gradient of H in its momentum slot."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.empty(spec.dim)
    for ax in range(spec.dim):
        e = np.zeros(spec.dim)
        e[ax] = step
        out[ax] = (
            eval_hamiltonian(spec, t, x, p + e) - eval_hamiltonian(spec, t, x, p - e)
        ) / (2.0 * step)
    return out


def effective_control_bound(spec: ProblemSpec, p_probe=None, sample_points=None) -> float:
    """Radius bounding the dual maximizer of p.q - L over probed momenta.

    The maximizer of the control reformulation lives where q matches a
    gradient of H; probing the gradient over the momentum ball |p| <=
    p_probe and doubling covers it with a safety margin (the sharp radius is
    not constructive; the operator's window-saturation error backstops an
    underestimate).  ``p_probe`` defaults to lipschitz_M*(1 + horizon_T),
    the propagated regularity bound of the scheme's slices.
    """
    if p_probe is None:
        p_probe = spec.lipschitz_M * (1.0 + spec.horizon_T)
    kind = spec.hamiltonian
    if isinstance(kind, QuadraticIso):
        return 2.0 * kind.c * p_probe
    if isinstance(kind, PowerIso):
        return 2.0 * kind.c * p_probe ** (kind.m - 1)
    if sample_points is None:
        T = spec.horizon_T
        xs = [np.zeros(spec.dim)]
        for corner in np.ndindex(*(2,) * spec.dim):
            xs.append(np.array([1.0 if c else -1.0 for c in corner]))
        sample_points = [(t, x) for t in (0.0, T / 2.0, T) for x in xs]
    best = 0.0
    n_dirs = 16 if spec.dim == 2 else 2
    for t, x in sample_points:
        for j in range(n_dirs):
            if spec.dim == 1:
                d = np.array([1.0 if j == 0 else -1.0])
            else:
                ang = 2.0 * np.pi * j / n_dirs
                d = np.array([np.cos(ang), np.sin(ang)])
            for frac in (0.25, 0.5, 0.75, 1.0):
                p = frac * p_probe * d
                gnorm = float(np.linalg.norm(grad_hamiltonian_fd(spec, t, x, p)))
                if gnorm > best:
                    best = gnorm
    return 2.0 * best


def probe_coercive(spec: ProblemSpec, t=0.0, x=None, r_max=1e3) -> bool:
    """Spot-check superlinear growth: H/r increasing along rays out to r_max."""
    if x is None:
        x = np.zeros(spec.dim)
    dirs = [np.array([1.0]), np.array([-1.0])]
    if spec.dim == 2:
        dirs = [
            np.array([np.cos(a), np.sin(a)]) for a in np.linspace(0, 2 * np.pi, 9)[:-1]
        ]
    radii = np.geomspace(1.0, r_max, 12)
    for d in dirs:
        ratios = [eval_hamiltonian(spec, t, x, r * d) / r for r in radii]
        if any(ratios[k + 1] < ratios[k] - 1e-9 for k in range(len(ratios) - 1)):
            return False
    return True
