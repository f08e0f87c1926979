"""
Kinematic controllers ``(xi_u, V)`` on SO(3) and SE(2) and their numeric
certification.

A kinematic controller is a velocity law ``xi_u(g)`` on the group paired
with a Morse function ``V(g)`` that decreases along ``g' = -g xi_u(g)``.
Besides the controllers themselves this module samples the group to check
the four defining properties, the quadratic bound relating ``V`` to the
adjoint distance, and the SE(2) gain conditions built from ``Q2``/``Q3``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NearAntipodal
from .lie import (EPS_LOG, PoseSE2, Rotation3, WeightedMetric, _alpha,
                  _one_minus_alpha_over_theta, se2_H, se2_log, so3_angle, so3_exp,
                  so3_log, so3_right_jacobian_inv)

# --------------------------------------------------------------------------- #
# SO(3)
# --------------------------------------------------------------------------- #


def so3_xi_u(Re: Rotation3) -> np.ndarray:
    """``Omega_u(R_e) = log(R_e)^vee``."""
    return so3_log(Re)


def so3_morse(Re: Rotation3) -> float:
    """``V(R_e) = 2 - sqrt(1 + tr R_e)``, in [0, 2]."""
    return 2.0 - math.sqrt(max(1.0 + Re.trace(), 0.0))


def so3_psi(Re: Rotation3) -> float:
    tr1 = 1.0 + Re.trace()
    if tr1 <= EPS_LOG:
        raise NearAntipodal(f"1 + tr(R) = {tr1:.3e}")
    return 0.5 / math.sqrt(tr1)


def so3_morse_body_grad(Re: Rotation3) -> np.ndarray:
    """Body covector ``psi(R_e) (R_e - R_e^T)^vee``."""
    m = Re.m
    return so3_psi(Re) * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


class KinematicControllerSO3:
    """Logarithmic attitude controller with ``V = 2 - sqrt(1 + tr R)``."""

    group = Rotation3
    dim = 3

    def __init__(self, eps_neighborhood: float = 0.01):
        self.eps_neighborhood = eps_neighborhood

    def xi_u(self, g: Rotation3) -> np.ndarray:
        return so3_xi_u(g)

    def morse(self, g: Rotation3) -> float:
        return so3_morse(g)

    def morse_body_grad(self, g: Rotation3) -> np.ndarray:
        return so3_morse_body_grad(g)

    def xi_u_rate(self, g: Rotation3, xi_e) -> np.ndarray:
        """Time derivative of ``xi_u(g_e(t))`` when ``g_e' = g_e xi_e^``."""
        return so3_right_jacobian_inv(so3_log(g)) @ np.asarray(xi_e, dtype=float)

    def critical_margin(self, g: Rotation3) -> float:
        """Distance-like margin to the excluded set; ``1 + tr(R)``."""
        return 1.0 + g.trace()

    def in_neighborhood(self, g: Rotation3) -> bool:
        return self.morse(g) < 2.0 - self.eps_neighborhood

    def describe(self) -> str:
        return "SO(3) log controller"


# --------------------------------------------------------------------------- #
# SE(2)
# --------------------------------------------------------------------------- #

_VZ_ZERO = 1e-12


def se2_beta(vz) -> float:
    """``beta(v_z) = -arctan(z_y / z_x)`` on the principal branch.

    ``beta = 0`` when ``||v_z|| < 1e-12``; on the line ``z_x = 0`` the
    one-sided limit ``-sign(z_y) pi/2`` is returned.
    """
    zx, zy = float(vz[0]), float(vz[1])
    if zx * zx + zy * zy < _VZ_ZERO * _VZ_ZERO:
        return 0.0
    if zx == 0.0:
        return -math.copysign(0.5 * math.pi, zy)
    return -math.atan(zy / zx)


def se2_beta_grad(vz) -> np.ndarray:
    """Gradient of beta with respect to ``v_z``: ``(z_y, -z_x) / ||v_z||^2``."""
    zx, zy = float(vz[0]), float(vz[1])
    r2 = zx * zx + zy * zy
    if r2 < _VZ_ZERO * _VZ_ZERO:
        return np.zeros(2)
    return np.array([zy / r2, -zx / r2])


def se2_xi_u(ge: PoseSE2, k_b: float) -> np.ndarray:
    """``xi_u(g_e) = (z_x, 0, theta_e + k_b beta(v_z))``."""
    z = se2_log(ge)
    return np.array([z[0], 0.0, z[2] + k_b * se2_beta(z[:2])])


def se2_morse(ge: PoseSE2, k1: float, k2: float) -> float:
    """``V = (k1/2)||z||^2 + (k2/2) beta^2``."""
    z = se2_log(ge)
    b = se2_beta(z[:2])
    return 0.5 * k1 * float(z @ z) + 0.5 * k2 * b * b


def se2_morse_body_grad(ge: PoseSE2, k1: float, k2: float) -> np.ndarray:
    """Body covector ``k1 H^T z + k2 beta Hbar^T grad(beta)``."""
    z = se2_log(ge)
    H = se2_H(z)
    out = k1 * (H.T @ z)
    b = se2_beta(z[:2])
    if b != 0.0:
        out += k2 * b * (H[:2].T @ se2_beta_grad(z[:2]))
    return out


class KinematicControllerSE2:
    """Logarithmic unicycle controller with heading correction ``k_b beta``.

    Args:
        k_b: heading gain; must exceed 2 unless ``allow_uncertified``.
        k1, k2: Morse-function weights, positive.
        allow_uncertified: accept ``k_b <= 2`` (used for negative controls).
    """

    group = PoseSE2
    dim = 3

    def __init__(self, k_b: float = 10.0, k1: float = 0.01, k2: float = 0.1,
                 allow_uncertified: bool = False, theta_margin: float = 0.01):
        if k1 <= 0 or k2 < 0:
            raise ValueError("k1 must be > 0 and k2 >= 0")
        if k_b <= 2.0 and not allow_uncertified:
            raise ValueError(f"k_b = {k_b} must exceed 2")
        if k_b <= 0:
            raise ValueError("k_b must be positive")
        self.k_b = float(k_b)
        self.k1 = float(k1)
        self.k2 = float(k2)
        self.theta_margin = theta_margin

    def xi_u(self, g: PoseSE2) -> np.ndarray:
        return se2_xi_u(g, self.k_b)

    def morse(self, g: PoseSE2) -> float:
        return se2_morse(g, self.k1, self.k2)

    def morse_body_grad(self, g: PoseSE2) -> np.ndarray:
        return se2_morse_body_grad(g, self.k1, self.k2)

    def xi_u_rate(self, g: PoseSE2, xi_e) -> np.ndarray:
        z = se2_log(g)
        zdot = se2_H(z) @ np.asarray(xi_e, dtype=float)
        bdot = float(se2_beta_grad(z[:2]) @ zdot[:2])
        return np.array([zdot[0], 0.0, zdot[2] + self.k_b * bdot])

    def critical_margin(self, g: PoseSE2) -> float:
        return math.pi - abs(g.theta)

    def in_neighborhood(self, g: PoseSE2) -> bool:
        return abs(g.theta) < math.pi - self.theta_margin

    def describe(self) -> str:
        return f"SE(2) log controller k_b={self.k_b:g} k1={self.k1:g} k2={self.k2:g}"


# --------------------------------------------------------------------------- #
# Samplers
# --------------------------------------------------------------------------- #

Sampler = Callable[[np.random.Generator], object]


def so3_sampler(max_angle: float = math.pi - 0.01) -> Sampler:
    """Uniform axis, angle uniform in (0, max_angle)."""

    def draw(rng: np.random.Generator) -> Rotation3:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        return so3_exp(axis * rng.uniform(0.0, max_angle))

    return draw


def se2_sampler(p_box: float = 1.5, theta_max: float = math.pi - 0.01) -> Sampler:
    """Position uniform in ``[-p_box, p_box]^2``, heading uniform in ``(-theta_max, theta_max)``."""

    def draw(rng: np.random.Generator) -> PoseSE2:
        x, y = rng.uniform(-p_box, p_box, 2)
        return PoseSE2(x, y, rng.uniform(-theta_max, theta_max))

    return draw


def default_sampler(ctrl) -> Sampler:
    return so3_sampler() if isinstance(ctrl, KinematicControllerSO3) else se2_sampler()


# --------------------------------------------------------------------------- #
# Definition checks
# --------------------------------------------------------------------------- #

@dataclass
class Definition1Report:
    prop_i_ok: bool
    prop_ii_ok: bool
    prop_iii_violations: int
    prop_iv_rate_estimate: float
    samples: int
    max_inverse_error: float = 0.0
    b1_estimate: float = float("nan")
    b2_estimate: float = float("nan")
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.prop_i_ok and self.prop_ii_ok and self.prop_iii_violations == 0
                and self.prop_iv_rate_estimate > 0)

    def summary(self) -> str:
        lines = [
            f"samples            {self.samples}",
            f"(i)   xi_u(e) = 0   {'ok' if self.prop_i_ok else 'FAIL'}",
            f"(ii)  odd symmetry  {'ok' if self.prop_ii_ok else 'FAIL'}"
            f"  (max |xi_u(g^-1) + xi_u(g)| = {self.max_inverse_error:.3e})",
            f"(iii) descent       {self.prop_iii_violations} violation(s)",
            f"(iv)  rate y        {self.prop_iv_rate_estimate:.6g}",
            f"b1, b2 estimates    {self.b1_estimate:.6g}, {self.b2_estimate:.6g}",
        ]
        return "\n".join(lines)

    def write_violations_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "angle", "V", "pairing"])
            for row in self.violations:
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def _angle_of(g) -> float:
    return so3_angle(g) if isinstance(g, Rotation3) else g.theta


def check_definition1(ctrl, sampler: Optional[Sampler] = None, n: int = 10_000,
                      seed: int = 0, inverse_tol: float = 1e-10) -> Definition1Report:
    """Sample the group and test the four kinematic-controller properties.

    Args:
        ctrl: a kinematic controller.
        sampler: draws one group element from a generator; defaults to the
            controller's standard box.
        n: number of samples.
        seed: generator seed.
        inverse_tol: tolerance for ``xi_u(g^-1) = -xi_u(g)``.

    Returns:
        Definition1Report. Violations are recorded, never raised.
    """
    rng = np.random.default_rng(seed)
    sampler = sampler or default_sampler(ctrl)
    e = ctrl.group.identity()
    prop_i = bool(np.all(ctrl.xi_u(e) == 0.0))

    max_inv = 0.0
    violations = []
    y_est = math.inf
    b1 = math.inf
    b2 = 0.0
    used = 0
    for i in range(n):
        g = sampler(rng)
        try:
            xu = ctrl.xi_u(g)
            xu_inv = ctrl.xi_u(g.inverse())
            V = ctrl.morse(g)
            grad = ctrl.morse_body_grad(g)
        except NearAntipodal:
            continue
        used += 1
        max_inv = max(max_inv, float(np.max(np.abs(xu_inv + xu))))
        pairing = -float(grad @ xu)
        if V > 1e-14:
            if not pairing < 0.0:
                violations.append((i, _angle_of(g), V, pairing))
            elif ctrl.in_neighborhood(g):
                y_est = min(y_est, -pairing / V)
            gn2 = float(grad @ grad)
            if gn2 > 0:
                b1 = min(b1, V / gn2)
                b2 = max(b2, V / gn2)
    if not math.isfinite(y_est) or violations:
        y_est = 0.0 if not math.isfinite(y_est) else y_est
    return Definition1Report(
        prop_i_ok=prop_i,
        prop_ii_ok=max_inv < inverse_tol,
        prop_iii_violations=len(violations),
        prop_iv_rate_estimate=y_est,
        samples=used,
        max_inverse_error=max_inv,
        b1_estimate=b1 if math.isfinite(b1) else float("nan"),
        b2_estimate=b2 if used else float("nan"),
        violations=violations,
    )


def adjoint_distance_sq(g, metric: Optional[WeightedMetric] = None) -> float:
    """``||I - Ad(g^-1)||^2`` in Frobenius norm, optionally metric-weighted."""
    Ad = g.inverse().Ad()
    D = np.eye(Ad.shape[0]) - Ad
    if metric is None:
        return float(np.sum(D * D))
    return metric.operator_frobenius_sq(D)


def check_assumption3(ctrl, gamma: float, sampler: Optional[Sampler] = None,
                      n: int = 10_000, metric: Optional[WeightedMetric] = None,
                      seed: int = 0) -> tuple[bool, float]:
    """Test ``V(g) >= gamma ||I - Ad(g^-1)||^2`` on samples.

    Returns ``(ok, worst_ratio)`` with ``worst_ratio = min V / ||.||^2``.
    Samples with a vanishing denominator are skipped; if none remain the
    check is vacuously true and the ratio is ``inf``.
    """
    rng = np.random.default_rng(seed)
    sampler = sampler or default_sampler(ctrl)
    worst = math.inf
    for _ in range(n):
        g = sampler(rng)
        try:
            V = ctrl.morse(g)
        except NearAntipodal:
            continue
        d2 = adjoint_distance_sq(g, metric)
        if d2 < 1e-300:
            continue
        worst = min(worst, V / d2)
    return worst >= gamma, worst


# --------------------------------------------------------------------------- #
# SE(2) gain conditions
# --------------------------------------------------------------------------- #

def _sym2_eig(a: float, b: float, c: float) -> tuple[float, float]:
    """Eigenvalues (min, max) of ``[[a, b], [b, c]]`` in closed form."""
    m = 0.5 * (a + c)
    r = math.hypot(0.5 * (a - c), b)
    return m - r, m + r


def se2_q_matrices(theta: float, vz, k_b: float) -> tuple[np.ndarray, np.ndarray]:
    """The ``Q2`` and ``Q3`` matrices of the SE(2) descent decomposition.

    With them ``<grad V, -xi_u> = -k1 v^T Q2 v - k1 theta^2 - k2 v^T Q3 v``.
    """
    vz = np.asarray(vz, dtype=float)
    b = se2_beta(vz)
    r2 = float(vz @ vz)
    c = b / r2 if r2 > 0 else 0.0
    a = _alpha(theta)
    q = _one_minus_alpha_over_theta(theta)  # (1 - alpha)/theta
    phi1 = 1.0 + k_b * b * q + k_b * c * theta
    phi2 = (theta + k_b * b) * q + k_b * c * theta
    Q2 = np.array([[phi1, 0.25 * theta], [0.25 * theta, phi2]])
    Q3 = 0.5 * np.array([[k_b * b * c, c * a], [c * a, c * (theta + k_b * b)]])
    return Q2, Q3


@dataclass
class GainVerdict:
    feasible: bool
    gamma1_min: float
    witness: Optional[tuple] = None  # (theta, beta, |v_z|) at the worst grid point

    def __str__(self):
        if self.feasible:
            return f"feasible (min gamma1 = {self.gamma1_min:.6g})"
        t, b, r = self.witness
        return (f"infeasible: gamma1 = {self.gamma1_min:.6g} at "
                f"theta={t:.4g}, beta={b:.4g}, |v_z|={r:.4g}")


def default_gain_grid() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    thetas = np.linspace(-2.0, 2.0, 41)
    betas = np.concatenate([-np.linspace(0.8, 1.5, 8), np.linspace(0.8, 1.5, 8)])
    radii = np.array([0.01, 0.1, 0.5, 1.0, 2.0])
    return thetas, betas, radii


def gain_feasibility_se2(k_b: float, k1: float, k2: float, grid=None) -> GainVerdict:
    """Evaluate ``gamma1 = min(k2 lmin(Q3) - k1 lmax(Q2), k1)`` over a grid.

    Args:
        grid: ``(thetas, betas, radii)``; ``v_z`` is rebuilt from ``beta``
            and ``|v_z|`` with ``z_x > 0``.  Defaults to
            :func:`default_gain_grid`.
    """
    thetas, betas, radii = grid if grid is not None else default_gain_grid()
    worst = math.inf
    witness = None
    for th in thetas:
        for b in betas:
            for r in radii:
                vz = (r * math.cos(b), -r * math.sin(b))
                Q2, Q3 = se2_q_matrices(float(th), vz, k_b)
                l3 = _sym2_eig(Q3[0, 0], Q3[0, 1], Q3[1, 1])[0]
                l2 = _sym2_eig(Q2[0, 0], Q2[0, 1], Q2[1, 1])[1]
                g1 = min(k2 * l3 - k1 * l2, k1)
                if g1 < worst:
                    worst, witness = g1, (float(th), float(b), float(r))
    return GainVerdict(worst > 0, worst, witness)


def se2_random_pose(rng: np.random.Generator, p_box: float = 1.5,
                    theta_max: float = math.pi - 0.01) -> PoseSE2:
    return se2_sampler(p_box, theta_max)(rng)


__all__ = [
    "KinematicControllerSO3", "KinematicControllerSE2", "Definition1Report",
    "GainVerdict", "so3_xi_u", "so3_morse", "so3_morse_body_grad", "so3_psi",
    "se2_xi_u", "se2_morse", "se2_morse_body_grad", "se2_beta", "se2_beta_grad",
    "se2_q_matrices", "check_definition1", "check_assumption3",
    "gain_feasibility_se2", "adjoint_distance_sq", "so3_sampler", "se2_sampler",
    "default_gain_grid",
]
