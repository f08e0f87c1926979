"""
Trajectory CSV files and the summary metrics computed from them.

File layout::

    # geosmc <version>
    # scenario: <name>
    # system: unicycle | spacecraft
    # config_sha256: <hex>
    t,x,y,theta,...            <- column header (see ``columns_for``)
    <rows, %.17g>
    # end rows=<N>

The trailing ``# end`` line lets :func:`read_trajectory_csv` detect
truncated files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .errors import GeometricControlError

SETTLING_THRESHOLD = 0.05

_COMMON_TAIL = ["err_frobenius", "err_xi", "sliding_norm"]
_SCALAR_TAIL = ["tau_norm", "lyapunov_W", "morse_V", "constraint_residual"]

SCHEMAS = {
    "unicycle": (["t", "x", "y", "theta", "x_d", "y_d", "theta_d"] + _COMMON_TAIL
                 + ["tau_1", "tau_2"] + _SCALAR_TAIL),
    "spacecraft": (["t"] + [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)]
                   + [f"rd{i}{j}" for i in range(1, 4) for j in range(1, 4)] + _COMMON_TAIL
                   + ["tau_1", "tau_2", "tau_3"] + _SCALAR_TAIL),
}


class SchemaError(GeometricControlError, ValueError):
    """CSV does not follow the trajectory schema or is truncated."""


def columns_for(system: str) -> list:
    return list(SCHEMAS[system])


def _row(s) -> list:
    tau = list(s.tau)
    return ([s.t, *s.pose, *s.desired_pose, s.err_frobenius, s.err_xi, s.sliding_norm, *tau,
             math.sqrt(sum(v * v for v in tau)), s.lyapunov_W, s.morse_V, s.constraint_residual])


def write_trajectory_csv(path, samples: Iterable, system: str, scenario_name: str,
                         config_hash: str) -> int:
    """Write samples to ``path``; returns the number of data rows."""
    cols = columns_for(system)
    n = 0
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# geosmc {__version__}\n")
        fh.write(f"# scenario: {scenario_name}\n")
        fh.write(f"# system: {system}\n")
        fh.write(f"# config_sha256: {config_hash}\n")
        fh.write(",".join(cols) + "\n")
        for s in samples:
            vals = _row(s)
            if len(vals) != len(cols):
                raise SchemaError(f"sample has {len(vals)} fields, schema has {len(cols)}")
            fh.write(",".join("%.17g" % v for v in vals) + "\n")
            n += 1
        fh.write(f"# end rows={n}\n")
    return n


@dataclass
class Trajectory:
    system: str
    meta: dict
    columns: list
    data: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def read_trajectory_csv(path) -> Trajectory:
    """Read and validate a trajectory CSV.

    Raises:
        SchemaError: unknown column set, malformed rows, non-increasing time,
            negative error fields or a missing/incorrect end marker.
    """
    lines = Path(path).read_text().splitlines()
    meta = {}
    header = None
    rows = []
    end_count = None
    for ln, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("end rows="):
                if end_count is not None:
                    raise SchemaError("duplicate end marker")
                end_count = int(body.split("=", 1)[1])
            elif ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        if end_count is not None:
            raise SchemaError(f"line {ln}: data after end marker")
        if header is None:
            header = line.split(",")
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError:
            raise SchemaError(f"line {ln}: non-numeric field") from None
        if len(vals) != len(header):
            raise SchemaError(f"line {ln}: {len(vals)} fields, expected {len(header)}")
        rows.append(vals)
    if header is None:
        raise SchemaError("no column header")
    system = next((k for k, cols in SCHEMAS.items() if cols == header), None)
    if system is None:
        raise SchemaError("column header matches no known schema")
    if end_count is None:
        raise SchemaError("missing end marker (truncated file?)")
    if end_count != len(rows):
        raise SchemaError(f"end marker says {end_count} rows, found {len(rows)}")
    if not rows:
        raise SchemaError("no data rows")
    data = np.array(rows)
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise SchemaError("time column is not strictly increasing")
    for name in ("err_frobenius", "err_xi", "sliding_norm"):
        if np.any(data[:, header.index(name)] < 0):
            raise SchemaError(f"negative entries in {name}")
    return Trajectory(system, meta, header, data)


# --------------------------------------------------------------------------- #
# Metrics
# --------------------------------------------------------------------------- #

@dataclass
class Metrics:
    settling_time: float      # inf if the error never settles
    lyapunov_rate: float      # slope of log W over [t_fit0, t_end]; nan if undefined
    peak_tau: float
    final_err: float
    rows: int

    def lines(self) -> list:
        st = "never" if math.isinf(self.settling_time) else f"{self.settling_time:.6g} s"
        return [f"settling_time (err_frobenius < {SETTLING_THRESHOLD:g}): {st}",
                f"lyapunov_rate (log W slope): {self.lyapunov_rate:.6g} 1/s",
                f"peak_tau_norm: {self.peak_tau:.6g}",
                f"final_err_frobenius: {self.final_err:.6g}",
                f"rows: {self.rows}"]


def settling_time(t: np.ndarray, err: np.ndarray, threshold: float = SETTLING_THRESHOLD) -> float:
    """First time after which ``err`` stays below ``threshold``."""
    above = np.nonzero(err >= threshold)[0]
    if len(above) == 0:
        return float(t[0])
    last = above[-1]
    if last == len(t) - 1:
        return math.inf
    return float(t[last + 1])


def log_slope(t: np.ndarray, W: np.ndarray, t0: float = 1.0, t1: float = math.inf) -> float:
    """Least-squares slope of ``log W`` on ``[t0, t1]`` over samples with ``W > 0``."""
    mask = (t >= t0) & (t <= t1) & (W > 0)
    if np.count_nonzero(mask) < 2:
        return math.nan
    return float(np.polyfit(t[mask], np.log(W[mask]), 1)[0])


def compute_metrics(traj: Trajectory, t_fit0: float = 1.0) -> Metrics:
    t = traj["t"]
    return Metrics(settling_time(t, traj["err_frobenius"]),
                   log_slope(t, traj["lyapunov_W"], t_fit0),
                   float(np.max(traj["tau_norm"])),
                   float(traj["err_frobenius"][-1]),
                   len(t))
