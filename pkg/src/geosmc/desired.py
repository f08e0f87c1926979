"""
Desired trajectories ``t -> (g_d, xi_d, xi_d')``.

Every trajectory is checked at construction: ``g_d' = g_d xi_d^`` and the
derivative of ``xi_d`` are compared against central differences at a few
probe times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegeneratePath
from .lie import PoseSE2, Rotation3, cross3, so3_exp

NU_MIN = 1e-9


@dataclass(frozen=True, eq=False)
class DesiredTrajectory:
    """Reference motion on a group.

    Attributes:
        g_d, xi_d, xi_d_dot: callables of time.
        group: group class.
        name: label used in reports.
        constant: True when ``xi_d`` is identically zero and ``g_d`` fixed.
    """

    g_d: Callable[[float], object]
    xi_d: Callable[[float], np.ndarray]
    xi_d_dot: Callable[[float], np.ndarray]
    group: type
    name: str = "desired"
    constant: bool = False
    verify_window: tuple = (0.0, 10.0)

    def __post_init__(self):
        if not self.constant:
            verify_desired(self, np.linspace(*self.verify_window, 5))

    def __call__(self, t: float):
        return self.g_d(t), self.xi_d(t), self.xi_d_dot(t)


def verify_desired(des: DesiredTrajectory, probes: Sequence[float], dt: float = 1e-5,
                   rtol: float = 1e-4) -> float:
    """Relative mismatch between the declared and differenced velocities.

    Raises:
        ValueError: if the mismatch exceeds ``rtol`` at any probe.
    """
    worst = 0.0
    for t in probes:
        gm, gp = des.g_d(t - dt), des.g_d(t + dt)
        # body velocity by central difference: log(g(t-dt)^-1 g(t+dt)) / (2 dt)
        fd = gm.inverse().compose(gp).log() / (2 * dt)
        xi = des.xi_d(t)
        err = np.linalg.norm(fd - xi) / max(1.0, np.linalg.norm(xi))
        fd_acc = (des.xi_d(t + dt) - des.xi_d(t - dt)) / (2 * dt)
        acc = des.xi_d_dot(t)
        err = max(err, np.linalg.norm(fd_acc - acc) / max(1.0, np.linalg.norm(acc)))
        worst = max(worst, err)
    if worst > rtol:
        raise ValueError(f"desired trajectory '{des.name}' is inconsistent: "
                         f"relative derivative mismatch {worst:.3e}")
    return worst


def static_target(g) -> DesiredTrajectory:
    """Constant target pose with zero velocity."""
    zero = np.zeros(3)
    return DesiredTrajectory(lambda t: g, lambda t: zero, lambda t: zero,
                             type(g), name="static", constant=True)


# --------------------------------------------------------------------------- #
# Planar paths
# --------------------------------------------------------------------------- #

PathDerivs = Callable[[float], tuple]  # t -> (x, x', x'', x''')


def desired_from_planar_path(x_d: PathDerivs, y_d: PathDerivs, name: str = "path",
                             verify_window=(0.0, 10.0)) -> DesiredTrajectory:
    """Unicycle reference from a planar curve.

    Args:
        x_d, y_d: callables returning ``(value, first, second, third)``
            derivatives at time ``t``.

    The heading is ``theta_d = atan2(y', x')``, the forward speed
    ``nu = |(x', y')|`` and the turn rate ``(x' y'' - y' x'') / nu^2``.

    Raises:
        DegeneratePath: when the speed drops below 1e-9 at an evaluated time.
    """

    def parts(t):
        x = x_d(t)
        y = y_d(t)
        nu2 = x[1] * x[1] + y[1] * y[1]
        nu = math.sqrt(nu2)
        if nu < NU_MIN:
            raise DegeneratePath(f"path speed {nu:.3e} at t={t:g} is below {NU_MIN:g}")
        return x, y, nu, nu2

    def g(t):
        x, y, _, _ = parts(t)
        return PoseSE2(x[0], y[0], math.atan2(y[1], x[1]))

    def xi(t):
        x, y, nu, nu2 = parts(t)
        return np.array([nu, 0.0, (x[1] * y[2] - y[1] * x[2]) / nu2])

    def xi_dot(t):
        x, y, nu, nu2 = parts(t)
        cross = x[1] * y[2] - y[1] * x[2]
        dot = x[1] * x[2] + y[1] * y[2]
        nudot = dot / nu
        wdot = (x[1] * y[3] - y[1] * x[3]) / nu2 - 2.0 * cross * dot / (nu2 * nu2)
        return np.array([nudot, 0.0, wdot])

    return DesiredTrajectory(g, xi, xi_dot, PoseSE2, name=name, verify_window=verify_window)


def _cos_derivs(a: float, w: float, phase: float = 0.0) -> PathDerivs:
    def f(t):
        c, s = math.cos(w * t + phase), math.sin(w * t + phase)
        return (a * c, -a * w * s, -a * w * w * c, a * w ** 3 * s)
    return f


def _sin_derivs(a: float, w: float, phase: float = 0.0) -> PathDerivs:
    def f(t):
        c, s = math.cos(w * t + phase), math.sin(w * t + phase)
        return (a * s, a * w * c, -a * w * w * s, -a * w ** 3 * c)
    return f


def lemniscate(ax: float = 0.8, wx: float = 0.1, ay: float = 0.6, wy: float = 0.2) -> DesiredTrajectory:
    """``x = ax cos(wx t)``, ``y = ay sin(wy t)``; the reference figure-eight."""
    return desired_from_planar_path(_cos_derivs(ax, wx), _sin_derivs(ay, wy), name="lemniscate",
                                    verify_window=(0.0, 60.0))


def circle(radius: float = 1.0, w: float = 1.0) -> DesiredTrajectory:
    return desired_from_planar_path(_cos_derivs(radius, w), _sin_derivs(radius, w), name="circle")


def line(vx: float = 1.0, vy: float = 0.0, x0: float = 0.0, y0: float = 0.0) -> DesiredTrajectory:
    return desired_from_planar_path(lambda t: (x0 + vx * t, vx, 0.0, 0.0),
                                    lambda t: (y0 + vy * t, vy, 0.0, 0.0), name="line")


def tabulated_path(t: Sequence[float], x: Sequence[float], y: Sequence[float]) -> DesiredTrajectory:
    """Reference through tabulated points via natural cubic splines."""
    sx = CubicSpline(t, x, bc_type="natural")
    sy = CubicSpline(t, y, bc_type="natural")

    def derivs(s):
        return lambda tt: (float(s(tt)), float(s(tt, 1)), float(s(tt, 2)), float(s(tt, 3)))

    # The third derivative of a cubic spline jumps at knots; probe away from them.
    t = np.asarray(t, dtype=float)
    mid = 0.5 * (t[0] + t[1])
    return desired_from_planar_path(derivs(sx), derivs(sy), name="tabulated",
                                    verify_window=(mid, mid))


# --------------------------------------------------------------------------- #
# Attitude references
# --------------------------------------------------------------------------- #

def attitude_sinusoid(amplitudes=(0.6, 0.4, 0.3), freqs=(0.3, 0.5, 0.2),
                      axes=((0, 0, 1), (0, 1, 0), (1, 0, 0))) -> DesiredTrajectory:
    """``R_d(t) = prod_k exp(a_k sin(w_k t) n_k^)`` with exact ``Omega_d`` and its rate."""
    axes = [np.asarray(a, dtype=float) / np.linalg.norm(a) for a in axes]
    amps = [float(a) for a in amplitudes]
    ws = [float(w) for w in freqs]

    def angles(t):
        return ([a * math.sin(w * t) for a, w in zip(amps, ws)],
                [a * w * math.cos(w * t) for a, w in zip(amps, ws)],
                [-a * w * w * math.sin(w * t) for a, w in zip(amps, ws)])

    def g(t):
        phi, _, _ = angles(t)
        R = Rotation3.identity()
        for ph, n in zip(phi, axes):
            R = R @ so3_exp(ph * n)
        return R

    cache = {}

    def both(t):
        if cache.get("t") == t:
            return cache["out"]
        # Walk the product from the right: S is the tail product R_{k+1} ... R_n
        # and W its body velocity.
        phi, dphi, ddphi = angles(t)
        S = np.eye(3)
        W = np.zeros(3)
        Wdot = np.zeros(3)
        for k in reversed(range(len(axes))):
            u = S.T @ (dphi[k] * axes[k])
            udot = -cross3(W, u) + S.T @ (ddphi[k] * axes[k])
            W = W + u
            Wdot = Wdot + udot
            S = so3_exp(phi[k] * axes[k]).m @ S
        cache["t"], cache["out"] = t, (W, Wdot)
        return W, Wdot

    return DesiredTrajectory(g, lambda t: both(t)[0], lambda t: both(t)[1], Rotation3,
                             name="attitude-sinusoid")
