"""Data-only building blocks for experiment configs.

Configs name coefficients, terminal data, and obstacles from this registry
instead of carrying code, which keeps runs reproducible from the config
file alone.  Builders take the spatial dimension explicitly so batched
arguments are unambiguous: 1D functions see scalars or (N,) arrays, 2D
functions see (2,) points or (N, 2) batches.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .hamiltonians import PowerIso, ProblemSpec, QuadraticIso, TabulatedConvex

#: Obstacle level used to switch the obstacle off.
NO_OBSTACLE = 1e9


def _dist(x, center, dim):
    """|x - center| for scalars, (N,) 1D batches, (2,) points, (N,2) batches."""
    arr = np.asarray(x, dtype=float)
    if dim == 1:
        return np.abs(arr - center)
    delta = arr - np.asarray(center, dtype=float)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def spatial_function(kind: str, params: dict, dim: int = 1):
    """Build a scalar function of x from a registry entry; returns (fn, lip).

    Kinds: constant {value}; affine {intercept, slope}; abs_cone {offset,
    slope, center}; capped_cone {offset, slope, center, cap}; gaussian_bump
    {amplitude, width, center, offset}; capped_call / capped_put {strike,
    cap, offset} (1D payoff shapes).
    """
    p = dict(params)
    if kind == "constant":
        value = float(p.pop("value"))
        fn = lambda x: value + 0.0 * _dist(x, 0.0 if dim == 1 else np.zeros(dim), dim)
        lip = 0.0
    elif kind == "affine":
        intercept = float(p.pop("intercept"))
        slope = np.atleast_1d(np.asarray(p.pop("slope"), dtype=float))
        if dim == 1:
            fn = lambda x: intercept + slope[0] * np.asarray(x, dtype=float)
        else:
            fn = lambda x: intercept + np.asarray(x, dtype=float) @ slope
        lip = float(np.linalg.norm(slope[:dim]))
    elif kind in ("abs_cone", "capped_cone"):
        offset = float(p.pop("offset", 0.0))
        slope = float(p.pop("slope", 1.0))
        center = p.pop("center", 0.0)
        cap = float(p.pop("cap", np.inf)) if kind == "capped_cone" else np.inf
        fn = lambda x: offset + np.minimum(slope * _dist(x, center, dim), cap)
        lip = abs(slope)
    elif kind == "gaussian_bump":
        amplitude = float(p.pop("amplitude"))
        width = float(p.pop("width", 1.0))
        center = p.pop("center", 0.0)
        offset = float(p.pop("offset", 0.0))
        fn = lambda x: offset + amplitude * np.exp(-(_dist(x, center, dim) ** 2) / width**2)
        lip = abs(amplitude) * np.sqrt(2.0 / np.e) / abs(width)
    elif kind == "capped_call":
        strike = float(p.pop("strike", 0.0))
        cap = float(p.pop("cap", 1.0))
        offset = float(p.pop("offset", 0.0))
        fn = lambda x: offset + np.minimum(np.maximum(np.asarray(x, dtype=float) - strike, 0.0), cap)
        lip = 1.0
    elif kind == "capped_put":
        strike = float(p.pop("strike", 0.0))
        cap = float(p.pop("cap", 1.0))
        offset = float(p.pop("offset", 0.0))
        fn = lambda x: offset + np.minimum(np.maximum(strike - np.asarray(x, dtype=float), 0.0), cap)
        lip = 1.0
    else:
        raise ConfigError(f"unknown spatial function kind '{kind}'")
    if kind in ("capped_call", "capped_put") and dim != 1:
        raise ConfigError(f"'{kind}' is a 1D payoff shape")
    if p:
        raise ConfigError(f"unknown parameters for '{kind}': {sorted(p)}")
    return fn, lip


def obstacle_function(kind: str, params: dict, dim: int = 1):
    """Build an obstacle f(t, x); 'none' yields the sentinel level."""
    if kind == "none":
        zero = lambda x: 0.0 * _dist(x, 0.0 if dim == 1 else np.zeros(dim), dim)
        return (lambda t, x: NO_OBSTACLE + zero(x)), 0.0
    fn, lip = spatial_function(kind, params, dim)
    return (lambda t, x: fn(x)), lip


def coefficient_function(value, dim: int = 1):
    """Constant or (1D) affine coefficient of (t, x)."""
    if isinstance(value, (int, float)):
        const = float(value)
        return (lambda t, x: const), abs(const)
    if isinstance(value, dict):
        extra = set(value) - {"const", "slope"}
        if extra:
            raise ConfigError(f"unknown coefficient keys: {sorted(extra)}")
        if dim != 1:
            raise ConfigError("affine coefficients are 1D only")
        const = float(value.get("const", 0.0))
        slope = float(value.get("slope", 0.0))
        return (
            lambda t, x: const + slope * np.asarray(x, dtype=float)
        ), abs(const) + abs(slope)
    raise ConfigError(f"cannot interpret coefficient {value!r}")


def hamiltonian_kind(kind: str, params: dict):
    p = dict(params)
    if kind == "quadratic":
        out = QuadraticIso(c=float(p.pop("c", 1.0)))
    elif kind == "power":
        out = PowerIso(m=int(p.pop("m")), c=float(p.pop("c", 1.0)))
    elif kind == "tabulated":
        name = p.pop("name")
        out = builtin_tabulated(name)
    else:
        raise ConfigError(f"unknown Hamiltonian kind '{kind}'")
    if p:
        raise ConfigError(f"unknown Hamiltonian parameters: {sorted(p)}")
    return out


def builtin_tabulated(name: str) -> TabulatedConvex:
    """Named tabulated evaluators so configs stay data-only."""
    if name == "shifted_quadratic":
        # quadratic with a nonzero zero-momentum level
        return TabulatedConvex(
            h=lambda t, x, p: 0.5 * float(np.dot(p, p)) + 0.3,
            growth=(0.25, 2.0, 0.0),
        )
    if name == "kinked_quadratic":
        # x-modulated kink on top of a quadratic; convex, coercive
        return TabulatedConvex(
            h=lambda t, x, p: 0.5 * float(np.dot(p, p))
            + (1.0 + 0.5 * float(np.sin(np.atleast_1d(x)[0]))) * float(np.linalg.norm(p)),
            growth=(0.25, 2.0, 0.0),
        )
    raise ConfigError(f"unknown tabulated Hamiltonian '{name}'")


def build_spec(problem: dict) -> ProblemSpec:
    """Assemble a :class:`ProblemSpec` from a parsed problem table."""
    p = dict(problem)
    dim = int(p.pop("dim", 1))
    horizon = float(p.pop("horizon"))
    sigma_fn, sigma_scale = coefficient_function(p.pop("sigma"), dim)
    drift_fn, drift_scale = coefficient_function(p.pop("drift", 0.0), dim)
    ham = hamiltonian_kind(**_kind_params(p.pop("hamiltonian")))
    term_fn, term_lip = spatial_function(**_kind_params(p.pop("terminal")), dim=dim)
    obs_fn, obs_lip = obstacle_function(
        **_kind_params(p.pop("obstacle", {"kind": "none"})), dim=dim
    )
    lip_override = p.pop("lipschitz_bound", None)
    if p:
        raise ConfigError(f"unknown problem keys: {sorted(p)}")
    lipschitz_m = (
        float(lip_override)
        if lip_override is not None
        else max(sigma_scale, drift_scale, term_lip, obs_lip, 1e-6)
    )
    return ProblemSpec(
        dim=dim,
        sigma=sigma_fn,
        drift_b=drift_fn,
        hamiltonian=ham,
        obstacle_f=obs_fn,
        terminal_U=term_fn,
        horizon_T=horizon,
        lipschitz_M=lipschitz_m,
    )


def _kind_params(table) -> dict:
    if not isinstance(table, dict) or "kind" not in table:
        raise ConfigError(f"expected a table with a 'kind' key, got {table!r}")
    t = dict(table)
    kind = t.pop("kind")
    return {"kind": kind, "params": t}
