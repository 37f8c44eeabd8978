"""Experiment configuration: TOML schema, strict validation, margin rule.

A config is data only: the problem is assembled through the function
registry, so a run is a pure function of (config file, seed).  Unknown keys
anywhere in the file are a hard error.  The grid box must exceed the
reporting region by the truncation margin

    q_max * T + 6 * max|sigma| * sqrt(T),

which keeps the minimizer window and the quadrature tails of every reported
evaluation point inside the box.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backward import OperatorConfig, gauss_hermite
from .errors import ConfigError
from .grids import SpatialGrid
from .hamiltonians import ProblemSpec, effective_control_bound
from .reference import ControlSet
from .registry import build_spec
from .switching import SwitchingConfig

_SCHEMA = {
    "seed": int,
    "problem": {
        "name": str,
        "dim": int,
        "horizon": float,
        "sigma": object,
        "drift": object,
        "lipschitz_bound": float,
        "hamiltonian": dict,
        "terminal": dict,
        "obstacle": dict,
    },
    "grid": {"lo": float, "hi": float, "points": int},
    "operator": {
        "quad_order": int,
        "coarse_candidates": int,
        "refine_iters": int,
        "q_max": float,
        "p_probe": float,
    },
    "deltas": {"values": list},
    "oracle": {"kind": str, "resolution_factor": int, "n_controls": int, "quad_order": int},
    "reporting": {"x_lo": float, "x_hi": float, "t_lo": float, "t_hi": float},
    "verdicts": {
        "min_rate": float,
        "require_monotone": bool,
        "strict_monotone": bool,
        "last_interval_factor": float,
        "min_k_slope": float,
        "min_gap_floor": float,
    },
    "switching": {
        "m": int,
        "control_radius": float,
        "k_values": list,
        "time_steps": int,
        "fp_tol": float,
        "fp_max_iters": int,
    },
}

_PROBLEM_PRESETS = {
    "smooth_quadratic": {
        "dim": 1,
        "horizon": 0.4,
        "sigma": 0.55,
        "drift": 0.0,
        "hamiltonian": {"kind": "quadratic", "c": 1.0},
        "terminal": {"kind": "gaussian_bump", "amplitude": 0.5, "width": 0.5},
        "obstacle": {"kind": "none"},
    },
    "capped_cone_obstacle": {
        "dim": 1,
        "horizon": 0.5,
        "sigma": 0.4,
        "drift": 0.0,
        "hamiltonian": {"kind": "quadratic", "c": 1.0},
        "terminal": {"kind": "capped_cone", "slope": 1.0, "cap": 1.0},
        "obstacle": {"kind": "capped_cone", "offset": 0.10, "slope": 1.2, "cap": 1.5},
    },
}


def _check_keys(table: dict, schema: dict, path: str) -> None:
    for key, val in table.items():
        if key not in schema:
            raise ConfigError(f"unknown config key '{path}{key}'")
        want = schema[key]
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}{key}' must be a table")
            if key in ("hamiltonian", "terminal", "obstacle"):
                continue  # registry tables are validated by the registry
            _check_keys(val, want, f"{path}{key}.")


@dataclass
class ExperimentConfig:
    """Everything one run depends on, resolved and validated."""

    spec: ProblemSpec
    grid: SpatialGrid
    deltas: list
    oracle_kind: str
    oracle_resolution_factor: int
    oracle_n_controls: int
    reporting: tuple  # (x_lo, x_hi, t_lo, t_hi)
    seed: int
    quad_order: int
    coarse_candidates: int
    refine_iters: int
    q_max: float
    verdicts: dict
    switching: dict | None = None
    raw: dict = field(default_factory=dict)

    def operator_config(self) -> OperatorConfig:
        return OperatorConfig(
            quad=gauss_hermite(self.quad_order, self.spec.noise_dim),
            q_max=self.q_max,
            coarse_candidates=self.coarse_candidates,
            refine_iters=self.refine_iters,
        )

    def switching_config(self) -> SwitchingConfig:
        if self.switching is None:
            raise ConfigError("config has no [switching] table")
        s = self.switching
        return SwitchingConfig(
            controls=ControlSet.equally_spaced(s["m"], s["control_radius"]),
            k=s["k_values"][0],
            grid=self.grid,
            time_steps=s["time_steps"],
            fp_tol=s.get("fp_tol", 1e-10),
            fp_max_iters=s.get("fp_max_iters", 10_000),
        )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    _check_keys(data, _SCHEMA, "")
    problem = dict(data.get("problem", {}))
    name = problem.pop("name", None)
    if name is not None:
        if name not in _PROBLEM_PRESETS:
            raise ConfigError(f"unknown problem preset '{name}'")
        merged = {k: v for k, v in _PROBLEM_PRESETS[name].items() if v is not None}
        merged.update(problem)
        problem = merged
    problem = {k: v for k, v in problem.items() if v is not None}
    spec = build_spec(problem)

    g = data.get("grid")
    if g is None:
        raise ConfigError("missing [grid] table")
    grid = SpatialGrid(
        dim=spec.dim,
        lo=np.full(spec.dim, float(g["lo"])),
        hi=np.full(spec.dim, float(g["hi"])),
        points_per_axis=int(g["points"]),
    )
    spec.validate_data(grid)

    deltas = [float(d) for d in data.get("deltas", {}).get("values", [])]
    if deltas:
        if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
            raise ConfigError("deltas must be strictly decreasing")
        if any(not 0.0 < d < spec.horizon_T for d in deltas):
            raise ConfigError("each delta must lie in (0, horizon)")

    op = data.get("operator", {})
    p_probe = op.get("p_probe")
    q_max = op.get("q_max")
    if q_max is None:
        q_max = effective_control_bound(spec, p_probe=p_probe)
    oracle = data.get("oracle", {"kind": "none"})
    rep = data.get("reporting")
    if rep is None:
        raise ConfigError("missing [reporting] table")
    reporting = (
        float(rep["x_lo"]),
        float(rep["x_hi"]),
        float(rep.get("t_lo", 0.0)),
        float(rep.get("t_hi", spec.horizon_T)),
    )
    _check_margin(spec, grid, reporting, q_max)

    verdicts = dict(data.get("verdicts", {}))
    cfg = ExperimentConfig(
        spec=spec,
        grid=grid,
        deltas=deltas,
        oracle_kind=oracle.get("kind", "none"),
        oracle_resolution_factor=int(oracle.get("resolution_factor", 4)),
        oracle_n_controls=int(oracle.get("n_controls", 129)),
        reporting=reporting,
        seed=int(data.get("seed", 0)),
        quad_order=int(op.get("quad_order", 7)),
        coarse_candidates=int(op.get("coarse_candidates", 17)),
        refine_iters=int(op.get("refine_iters", 30)),
        q_max=float(q_max),
        verdicts=verdicts,
        switching=dict(data["switching"]) if "switching" in data else None,
        raw=data,
    )
    return cfg


def _check_margin(spec: ProblemSpec, grid: SpatialGrid, reporting, q_max) -> None:
    x_lo, x_hi, t_lo, t_hi = reporting
    if x_lo >= x_hi or not (0.0 <= t_lo <= t_hi <= spec.horizon_T + 1e-12):
        raise ConfigError("reporting region is empty or outside the horizon")
    T = spec.horizon_T
    sig_max = 0.0
    for t in np.linspace(0.0, T, 4):
        s = spec.sigma_at(t, grid.nodes()[:: max(1, grid.n_nodes // 16)])
        sig_max = max(sig_max, float(np.max(np.abs(s))))
    margin = q_max * T + 6.0 * sig_max * np.sqrt(T)
    lo_gap = x_lo - grid.lo[0]
    hi_gap = grid.hi[0] - x_hi
    if min(lo_gap, hi_gap) < margin - 1e-9:
        raise ConfigError(
            f"truncation margin violated: need {margin:.4g} beyond the reporting "
            f"region, have {min(lo_gap, hi_gap):.4g}; enlarge the grid box or "
            f"shrink the reporting region"
        )
