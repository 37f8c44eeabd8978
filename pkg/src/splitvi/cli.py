"""Command-line harness.

Subcommands: ``solve`` (one scheme run, slice CSV), ``converge`` (step-size
sweep with report and verdicts), ``properties`` (invariant suites),
``switching`` (switching-cost sweep), ``oracle`` (run a reference solver
standalone).  Every run is a pure function of (config file, seed); the
``--threads`` flag affects speed only, never results.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import scheme
from .config import load_config
from .errors import SplitviError
from .harness import _oracle_eval_fn, run_convergence, run_property_suite, run_switching_study


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitvi",
        description="Splitting-scheme solver and convergence harness for "
        "obstacle problems with convex coercive Hamiltonians.",
    )
    parser.add_argument("command", choices=["solve", "converge", "properties", "switching", "oracle"])
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="speed only; never changes results")
    parser.add_argument(
        "--exclude-coarsest",
        action="store_true",
        help="drop the coarsest delta from rate fits (reported in the verdicts)",
    )
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "solve":
            delta = config.deltas[0] if config.deltas else config.spec.horizon_T / 10.0
            sol = scheme.solve(config.spec, delta, config.grid, config.operator_config())
            path = out / "solution.csv"
            sol.to_csv(path)
            print(f"wrote {path} (delta={delta:g}, {len(sol.times)} time slices)")
            return 0

        if args.command == "converge":
            report = run_convergence(
                config, exclude_coarsest=args.exclude_coarsest, threads=args.threads
            )
            report.to_csv(out / "convergence.csv")
            (out / "verdicts.txt").write_text(report.verdict_text())
            print(report.verdict_text(), end="")
            print(f"wrote {out / 'convergence.csv'}")
            return 0 if report.all_passed else 1

        if args.command == "properties":
            report = run_property_suite(config)
            (out / "properties.txt").write_text(report.text())
            print(report.text(), end="")
            return 0 if report.all_passed else 1

        if args.command == "switching":
            report = run_switching_study(config, threads=args.threads)
            report.to_csv(out / "switching.csv")
            (out / "switching_verdicts.txt").write_text(report.verdict_text())
            print(report.verdict_text(), end="")
            return 0 if report.all_passed else 1

        if args.command == "oracle":
            u_ref = _oracle_eval_fn(config)
            x_lo, x_hi, t_lo, t_hi = config.reporting
            xs = config.grid.axis(0)
            xin = xs[(xs >= x_lo - 1e-12) & (xs <= x_hi + 1e-12)]
            path = out / "oracle.csv"
            with open(path, "w", newline="") as fh:
                fh.write("t,x0,value\n")
                for t in np.linspace(t_lo, t_hi, 11):
                    vals = np.asarray(u_ref(t, xin), dtype=float)
                    for x, v in zip(xin, vals):
                        fh.write(f"{t:.12e},{x:.12e},{v:.12e}\n")
            print(f"wrote {path} ({config.oracle_kind} oracle)")
            return 0
    except SplitviError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
