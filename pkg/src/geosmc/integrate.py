"""
Fixed-step integration of reduced closed-loop dynamics.

Vector parts advance with the classical four-stage Runge-Kutta weights.
The group part is never added to: each stage pose is ``g exp(c h xi)`` and
the final pose is the product of exponentials with weights
``h/6, h/3, h/3, h/6`` (Crouch-Grossman style).  Rotations are
re-orthonormalized after every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import ReducedState, StateRate
from .errors import AbortNearCriticalSet, GeometricControlError, NearAntipodal
from .lie import Rotation3

METHODS = ("lie_euler", "rk4_cg")


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-3
    method: str = "rk4_cg"
    t_end: float = 10.0
    log_stride: int = 1

    def __post_init__(self):
        if not (0 < self.h <= 1e-2):
            raise ValueError(f"step h = {self.h} must lie in (0, 1e-2]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if int(self.log_stride) < 1:
            raise ValueError("log_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.h))


Rhs = Callable[[float, ReducedState], StateRate]


def _advance(state: ReducedState, g, k: StateRate, c: float) -> ReducedState:
    return ReducedState(g, state.r + c * k.rdot, state.rdot + c * k.rddot, state.p + c * k.pdot)


def _call(rhs: Rhs, t: float, state: ReducedState, stage: int) -> StateRate:
    try:
        return rhs(t, state)
    except GeometricControlError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = stage
            exc.args = (f"{exc.args[0] if exc.args else exc} [stage {stage}, t={t:.6g}]",)
        raise


def step(rhs: Rhs, t: float, state: ReducedState, h: float, method: str = "rk4_cg",
         k1: Optional[StateRate] = None) -> ReducedState:
    """Advance ``state`` from ``t`` to ``t + h``.

    Args:
        rhs: ``rhs(t, state) -> StateRate``.
        k1: optional precomputed first-stage rate at ``(t, state)``.

    Errors raised by ``rhs`` propagate with the failing stage recorded as
    ``exc.stage``.
    """
    G = type(state.g)
    g0 = state.g
    if k1 is None:
        k1 = _call(rhs, t, state, 1)
    if method == "lie_euler":
        out = ReducedState(g0 @ G.exp(h * k1.xi), state.r + h * k1.rdot,
                           state.rdot + h * k1.rddot, state.p + h * k1.pdot)
    else:
        half = 0.5 * h
        k2 = _call(rhs, t + half, _advance(state, g0 @ G.exp(half * k1.xi), k1, half), 2)
        k3 = _call(rhs, t + half, _advance(state, g0 @ G.exp(half * k2.xi), k2, half), 3)
        k4 = _call(rhs, t + h, _advance(state, g0 @ G.exp(h * k3.xi), k3, h), 4)
        h6, h3 = h / 6.0, h / 3.0
        g = g0 @ G.exp(h6 * k1.xi) @ G.exp(h3 * k2.xi) @ G.exp(h3 * k3.xi) @ G.exp(h6 * k4.xi)
        out = ReducedState(
            g,
            state.r + h6 * (k1.rdot + 2 * k2.rdot + 2 * k3.rdot + k4.rdot),
            state.rdot + h6 * (k1.rddot + 2 * k2.rddot + 2 * k3.rddot + k4.rddot),
            state.p + h6 * (k1.pdot + 2 * k2.pdot + 2 * k3.pdot + k4.pdot),
        )
    if isinstance(out.g, Rotation3):
        out = out.replace(g=out.g.orthonormalized())
    return out


def simulate(rhs: Rhs, state0: ReducedState, config: IntegratorConfig,
             sample: Optional[Callable] = None, margin: Optional[Callable] = None,
             abort_margin: float = 1e-6, t0: float = 0.0):
    """Integrate from ``t0`` to ``t0 + t_end`` with a fixed step.

    Args:
        rhs: closed-loop right-hand side.
        sample: ``sample(t, state) -> (record, k1)``; called at every step,
            the record is kept every ``log_stride`` steps (and at the end)
            and ``k1`` (may be None) is reused as the first RK stage.
        margin: ``margin(t, state)`` returning either a float or
            ``(float, log_vector)``.  The run aborts with
            :class:`AbortNearCriticalSet` once the float drops below
            ``abort_margin``, or when consecutive log vectors differ by more
            than pi (the error wrapped through the excluded set between
            two steps).

    Returns:
        ``(records, final_state)``.
    """
    n = config.n_steps
    h = config.h
    stride = int(config.log_stride)
    records = []
    state = state0
    prev_log = None
    for i in range(n + 1):
        t = t0 + i * h
        if margin is not None:
            try:
                m = margin(t, state)
            except NearAntipodal as exc:
                raise AbortNearCriticalSet(f"{exc} at t={t:.6g}", t=t, state=state,
                                           margin=0.0) from exc
            log_vec = None
            if isinstance(m, tuple):
                m, log_vec = m
            if m < abort_margin:
                raise AbortNearCriticalSet(
                    f"state within {m:.3e} of the excluded set at t={t:.6g}",
                    t=t, state=state, margin=m)
            if log_vec is not None:
                if prev_log is not None and np.max(np.abs(log_vec - prev_log)) > np.pi:
                    raise AbortNearCriticalSet(
                        f"error wrapped through the excluded set between t={t - h:.6g} and t={t:.6g}",
                        t=t, state=state, margin=0.0)
                prev_log = log_vec
        k1 = None
        if sample is not None:
            rec, k1 = sample(t, state)
            if i % stride == 0 or i == n:
                records.append(rec)
        if i == n:
            break
        state = step(rhs, t, state, h, config.method, k1=k1)
    return records, state
