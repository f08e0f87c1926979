"""
Command-line front end.

    geosmc simulate <scenario.ini | built-in name> [--out DIR] [--no-plot] [--certify-lambda]
    geosmc verify {lie,kinctrl,dynamics,sliding,all} [--jobs N] [--seed S] [--kb K]
    geosmc metrics <trajectory.csv>

Exit codes for ``simulate``: 0 success, 1 configuration error, 2 numerical
failure, 3 run aborted near the excluded set.  ``verify`` exits with the
number of failed groups (capped at 100).  ``metrics`` exits 1 on a schema
mismatch.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AbortNearCriticalSet, ConfigError, GeometricControlError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ABORT = 0, 1, 2, 3
MAX_FAILED_EXIT = 100


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _assumption3_gamma(scn) -> float:
    # SO(3): V / ||I - R^T||_F^2 = 1 / (4 (1 + cos(theta/2))) >= 1/8
    return scn.kin["k1"] / 8.0 if scn.system_type == "unicycle" else 1.0 / 8.0


def cmd_simulate(args) -> int:
    from .plotting import plot_script_text, render_panels
    from .report import compute_metrics, read_trajectory_csv, write_trajectory_csv
    from .scenario import load_scenario, run_scenario
    from .sliding import certify_lambda

    try:
        scn = load_scenario(args.config)
    except (ConfigError, ValueError, OSError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / Path(scn.output.get("csv", f"{scn.name}.csv")).name
    stem = csv_path.stem

    if args.certify_lambda:
        law = scn.build_law()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cert = certify_lambda(law.sys, law.ctrl, law.desired, scn.gains,
                                  scn.integrator.t_end, _assumption3_gamma(scn), seed=args.seed)
        print(("certify-lambda: " if cert.ok else "certify-lambda WARNING: ") + cert.message())

    t0 = time.perf_counter()
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            result = run_scenario(scn)
    except AbortNearCriticalSet as exc:
        _err(f"abort: {exc} (t={exc.t:.6g}, margin={exc.margin:.3e})")
        return EXIT_ABORT
    except (GeometricControlError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _err(f"numerical failure: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - t0

    last = result.samples[-1]
    if not all(math.isfinite(v) for v in (last.err_frobenius, last.lyapunov_W, *last.tau)):
        _err(f"numerical failure: non-finite values at t={last.t:.6g}")
        return EXIT_NUMERIC

    n = write_trajectory_csv(csv_path, result.samples, scn.system_type, scn.name, scn.config_hash)
    script_path = out / f"{stem}_plot.py"
    script_path.write_text(plot_script_text(csv_path.name, f"{stem}.png"))
    traj = read_trajectory_csv(csv_path)
    print(f"simulated {scn.name}: {n} samples in {elapsed:.2f} s")
    print(f"wrote {csv_path}")
    print(f"wrote {script_path}")
    if not args.no_plot:
        png = out / f"{stem}.png"
        render_panels(traj, png, title=scn.name)
        print(f"wrote {png}")
    for line in compute_metrics(traj).lines():
        print(line)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    opts = {}
    if args.kb is not None:
        opts["k_b"] = args.kb
    results = run_suite(args.suite, seed=args.seed, jobs=args.jobs, opts=opts)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name} ({r.seconds:.2f} s)")
        for line in r.lines:
            print(f"    {line}")
    summary = {"suite": args.suite, "seed": args.seed, "groups": len(results),
               "failed": [r.name for r in failed], "results": [r.as_dict() for r in results]}
    print("SUMMARY " + json.dumps(summary, default=float, sort_keys=True))
    if args.json:
        Path(args.json).write_text(json.dumps(summary, default=float, indent=2, sort_keys=True))
    return min(len(failed), MAX_FAILED_EXIT)


def cmd_metrics(args) -> int:
    from .report import SchemaError, compute_metrics, read_trajectory_csv

    try:
        traj = read_trajectory_csv(args.csv)
    except (SchemaError, OSError, ValueError) as exc:
        _err(f"schema error: {exc}")
        return EXIT_CONFIG
    print(f"{args.csv} ({traj.system})")
    for line in compute_metrics(traj, t_fit0=args.fit_from).lines():
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .scenario import BUILTINS
    from .verify import SUITES

    parser = argparse.ArgumentParser(prog="geosmc", description="Geometric sliding-mode control simulator.")
    parser.add_argument("--version", action="version", version=f"geosmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV, plot script and figure")
    p.add_argument("config", help=f"INI file or built-in name ({', '.join(BUILTINS)})")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--no-plot", action="store_true", help="skip rendering the PNG figure")
    p.add_argument("--certify-lambda", action="store_true",
                   help="check lambda against the exponential-tracking rule before running")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled certificates")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; a run is single-threaded")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run property batteries")
    p.add_argument("suite", choices=list(SUITES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="run groups in N worker processes")
    p.add_argument("--kb", type=float, default=None, help="override the SE(2) heading gain k_b")
    p.add_argument("--json", default=None, help="also write the summary to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("metrics", help="summarize a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("--fit-from", type=float, default=1.0, help="start of the log-W fit window (s)")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
