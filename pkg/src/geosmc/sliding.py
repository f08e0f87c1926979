"""
Sliding variables and sliding-mode control laws on reduced bundles.

With ``conn`` the (mechanical or nonholonomic) connection and ``conn^+`` its
generalized inverse, the shape-space sliding variable is

    s = r' + v,   v = -conn^+ (lam xi_u(g_e) - xi_ref + I^-1 p)

where ``xi_ref`` is ``0`` for regulation, ``Ad_{g_e^-1} xi_d`` for
unconstrained tracking and ``xi_d`` itself for constrained tracking.  The
force

    f_u = -v' - 1/2 M^-1 h + M^-1 dV - k_s s + M^-1 conn^T b

with ``b`` the body gradient of the Morse function drives ``s`` to zero and
cancels the cross term in ``W = V(g_e) + 1/2 s^T M s``.  The
``conn^T b`` coupling can be switched off (``coupling=False``) to obtain the
pure reaching law ``s' = -k_s s``, under which the sliding set
``{xi_ref - xi = lam xi_u}`` is forward invariant.

Two closed-form controllers (spacecraft on SO(3), unicycle on SE(2)) are
provided as independent implementations of the same laws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .desired import DesiredTrajectory, static_target
from .dynamics import (ConstrainedBundleSystem, ReducedState, StateRate,
                       UnconstrainedBundleSystem, constrained_rhs,
                       unconstrained_rhs)
from .errors import NearAntipodal
from .lie import (PoseSE2, Rotation3, WeightedMetric, _alpha, cross3,
                  _one_minus_alpha_over_theta, so3_log,
                  so3_right_jacobian_inv, wrap_angle)


@dataclass(frozen=True)
class SlidingGains:
    """``lam`` scales the kinematic controller, ``k_s`` is the reaching rate (1/s)."""

    lam: float = 1.5
    k_s: float = 2.2

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (self.k_s > 0 and math.isfinite(self.k_s)):
            raise ValueError(f"k_s must be positive, got {self.k_s}")


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Everything a control law computes at one ``(t, state)``."""

    force: np.ndarray          # shape acceleration command f_u
    tau: np.ndarray            # shape torque M f_u
    sigma: np.ndarray          # sliding variable
    V: float                   # Morse function at g_e
    W: float                   # V + 1/2 sigma^T M sigma
    g_e: object
    xi: np.ndarray
    xi_e: np.ndarray
    residual: np.ndarray       # xi - xi_ref + lam xi_u, zero on the sliding set


@dataclass(frozen=True)
class SlidingDiagnostics:
    s_or_sigma: np.ndarray
    lyapunov_W: float
    on_subgroup: bool


# --------------------------------------------------------------------------- #
# Generic path
# --------------------------------------------------------------------------- #

def _reference(desired: Optional[DesiredTrajectory], group, t: float):
    if desired is None:
        return group.identity(), np.zeros(3), np.zeros(3)
    return desired(t)


def evaluate_law(sys, ctrl, state: ReducedState, gains: SlidingGains,
                 desired: Optional[DesiredTrajectory] = None, t: float = 0.0,
                 mode: Optional[str] = None, coupling: bool = True) -> Evaluation:
    """Evaluate the generic sliding law.

    Args:
        mode: ``"unconstrained"`` (reference transported by ``Ad``) or
            ``"constrained"`` (raw ``xi_d``).  Defaults from the system type.
        coupling: include the ``M^-1 conn^T b`` term.
    """
    constrained = isinstance(sys, ConstrainedBundleSystem)
    if mode is None:
        mode = "constrained" if constrained else "unconstrained"
    r = state.r
    if constrained:
        conn, conn_pinv = sys.AA(r), sys.AA_pinv(r)
        Iinv_p = sys.Ibar_inv(r) @ state.p if len(state.p) else np.zeros(3)
    else:
        conn, conn_pinv = sys.A(r), sys.A_pinv(r)
        Iinv_p = sys.I_inv(r) @ state.p
    M = sys.M(r)
    Minv = sys.M_inv(r)

    g_d, xi_d, xi_d_dot = _reference(desired, sys.group, t)
    g_e = g_d.inverse() @ state.g
    xi = sys.xi(state)
    Ad_inv = g_e.inverse().Ad()
    xi_d_body = Ad_inv @ xi_d
    xi_e = xi - xi_d_body
    if mode == "constrained":
        xi_ref, xi_ref_dot = xi_d, xi_d_dot
    else:
        xi_ref = xi_d_body
        xi_ref_dot = -sys.group.ad_matrix(xi_e) @ xi_d_body + Ad_inv @ xi_d_dot

    xu = ctrl.xi_u(g_e)
    xu_dot = ctrl.xi_u_rate(g_e, xi_e)
    pdot = sys.momentum_rate(state, xi)
    if constrained:
        Iinv_pdot = sys.Ibar_inv(r) @ pdot if len(pdot) else np.zeros(3)
    else:
        Iinv_pdot = sys.I_inv(r) @ pdot

    lam, k_s = gains.lam, gains.k_s
    w = -conn_pinv @ (lam * xu - xi_ref + Iinv_p)
    sigma = state.rdot + w
    w_dot = -conn_pinv @ (lam * xu_dot - xi_ref_dot + Iinv_pdot)

    dV = sys.dV(r)
    if constrained:
        dV = sys.P_M(dV)
    f = -w_dot - 0.5 * (Minv @ sys.h(state, xi, pdot)) + Minv @ dV - k_s * sigma
    if coupling:
        f = f + Minv @ (conn.T @ ctrl.morse_body_grad(g_e))
    V = ctrl.morse(g_e)
    W = V + 0.5 * float(sigma @ M @ sigma)
    return Evaluation(f, M @ f, sigma, V, W, g_e, xi, xi_e, xi - xi_ref + lam * xu)


def sliding_var_regulation(sys: UnconstrainedBundleSystem, ctrl, state, gains) -> np.ndarray:
    """``s = r' - A^+ (lam xi_u(g) + I^-1 p)``."""
    r = state.r
    v = -sys.A_pinv(r) @ (gains.lam * ctrl.xi_u(state.g) + sys.I_inv(r) @ state.p)
    return state.rdot + v


def regulation_force(sys, ctrl, state, gains, coupling: bool = True) -> np.ndarray:
    """Force driving ``(g, xi)`` to ``(e, 0)`` on an unconstrained system."""
    return evaluate_law(sys, ctrl, state, gains, None, 0.0, "unconstrained", coupling).force


def tracking_var(sys, ctrl, state, desired, gains, t: float = 0.0) -> np.ndarray:
    """``varsigma = r' - A^+ (lam xi_u(g_e) - Ad_{g_e^-1} xi_d + I^-1 p)``."""
    r = state.r
    g_d, xi_d, _ = _reference(desired, sys.group, t)
    g_e = g_d.inverse() @ state.g
    ref = g_e.inverse().Ad() @ xi_d
    w = -sys.A_pinv(r) @ (gains.lam * ctrl.xi_u(g_e) - ref + sys.I_inv(r) @ state.p)
    return state.rdot + w


def tracking_force(sys, ctrl, state, desired, gains, t: float = 0.0,
                   coupling: bool = True) -> np.ndarray:
    """Tracking force on an unconstrained system."""
    return evaluate_law(sys, ctrl, state, gains, desired, t, "unconstrained", coupling).force


def constrained_regulation_force(sys, ctrl, state, gains, coupling: bool = True) -> np.ndarray:
    """Regulation force on a constrained system."""
    return evaluate_law(sys, ctrl, state, gains, None, 0.0, "constrained", coupling).force


def constrained_tracking_force(sys, ctrl, state, desired, gains, t: float = 0.0,
                               coupling: bool = True) -> np.ndarray:
    """Tracking force on a constrained system; ``xi_d`` enters without ``Ad``."""
    return evaluate_law(sys, ctrl, state, gains, desired, t, "constrained", coupling).force


def lyapunov_value(sys, ctrl, state, desired, gains, t: float = 0.0,
                   tol: float = 1e-6) -> SlidingDiagnostics:
    """``W = V(g_e) + 1/2 M(sigma, sigma)`` and sliding-set membership."""
    ev = evaluate_law(sys, ctrl, state, gains, desired, t)
    return SlidingDiagnostics(ev.sigma, ev.W, bool(np.linalg.norm(ev.residual) < tol))


# --------------------------------------------------------------------------- #
# Closed forms
# --------------------------------------------------------------------------- #

class SpacecraftController:
    """Attitude tracking with reaction wheels, written out in SO(3) terms.

    Uses ``Omega_u = log(R_e)^vee``, the ``psi (R_e - R_e^T)^vee`` gradient and
    ``Jr^-1`` for the rate of the log.
    """

    def __init__(self, sys: UnconstrainedBundleSystem, gains: SlidingGains,
                 desired: Optional[DesiredTrajectory] = None, coupling: bool = True):
        p = sys.params
        self.sys = sys
        self.gains = gains
        self.desired = desired
        self.coupling = coupling
        self.I = p.J + p.J_phi
        self.I_inv = np.linalg.inv(self.I)
        self.A = self.I_inv @ p.J_phi
        self.A_inv = np.linalg.solve(p.J_phi, self.I)
        self.M = p.J_phi - p.J_phi @ self.I_inv @ p.J_phi
        self.M_inv = np.linalg.inv(self.M)
        # constant products used every evaluation
        self.AinvIinv = self.A_inv @ self.I_inv
        self.MinvAT = self.M_inv @ self.A.T

    def evaluate(self, t: float, state: ReducedState) -> Evaluation:
        lam, k_s = self.gains.lam, self.gains.k_s
        if self.desired is None:
            Rd, Od, Od_dot = np.eye(3), np.zeros(3), np.zeros(3)
        else:
            gd, Od, Od_dot = self.desired(t)
            Rd = gd.m
        R = state.g.m
        Re = Rotation3._trusted(Rd.T @ R)
        tr1 = 1.0 + Re.trace()
        if tr1 <= 1e-8:
            raise NearAntipodal(f"1 + tr(R_e) = {tr1:.3e}")
        Om = -self.A @ state.rdot + self.I_inv @ state.p
        Od_b = Re.m.T @ Od
        Oe = Om - Od_b
        Ou = so3_log(Re)
        pdot = cross3(state.p, Om)
        w = -self.A_inv @ (lam * Ou - Od_b) - self.AinvIinv @ state.p
        sig = state.rdot + w
        Ou_dot = so3_right_jacobian_inv(Ou) @ Oe
        Od_b_dot = -cross3(Oe, Od_b) + Re.m.T @ Od_dot
        w_dot = -self.A_inv @ (lam * Ou_dot - Od_b_dot) - self.AinvIinv @ pdot
        f = -w_dot + self.MinvAT @ pdot - k_s * sig
        if self.coupling:
            m = Re.m
            grad = (0.5 / math.sqrt(tr1)) * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0],
                                                      m[1, 0] - m[0, 1]])
            f = f + self.MinvAT @ grad
        V = 2.0 - math.sqrt(tr1)
        W = V + 0.5 * float(sig @ self.M @ sig)
        return Evaluation(f, self.M @ f, sig, V, W, Re, Om, Oe, Om - Od_b + lam * Ou)


class UnicycleController:
    """Closed-form unicycle tracking law in scalar arithmetic.

    Computes ``tau = -Mbar (w' + k_s varsigma) + AA^T (k1 H^T z - k2 Hbar^T (beta/|v_z|^2)^ v_z)``
    and returns ``fbar_u = Mbar^-1 tau``.
    """

    def __init__(self, sys: ConstrainedBundleSystem, kin, gains: SlidingGains,
                 desired: Optional[DesiredTrajectory] = None, coupling: bool = True):
        p = sys.params
        self.sys = sys
        self.kin = kin
        self.gains = gains
        self.desired = desired if desired is not None else static_target(PoseSE2())
        self.coupling = coupling
        self.rho, self.d = p.rho, p.d
        q = p.rho * p.rho / 4.0
        a = p.mu * q
        b = p.J_R * q / (p.d * p.d)
        self.m11 = p.J_sigma + a + b
        self.m12 = a - b
        det = self.m11 * self.m11 - self.m12 * self.m12
        self.i11 = self.m11 / det
        self.i12 = -self.m12 / det
        self.M = np.array([[self.m11, self.m12], [self.m12, self.m11]])

    def evaluate(self, t: float, state: ReducedState) -> Evaluation:
        lam, k_s = self.gains.lam, self.gains.k_s
        k_b, k1, k2 = self.kin.k_b, self.kin.k1, self.kin.k2
        rho, d = self.rho, self.d
        gd, xid, xid_dot = self.desired(t)
        nud, wd = float(xid[0]), float(xid[2])
        nud_dot, wd_dot = float(xid_dot[0]), float(xid_dot[2])

        g = state.g
        s1, s2 = float(state.rdot[0]), float(state.rdot[1])
        nu = 0.5 * rho * (s1 + s2)
        om = 0.5 * rho / d * (s1 - s2)

        # left error g_e = g_d^-1 g
        cd, sd = math.cos(gd.theta), math.sin(gd.theta)
        dx, dy = g.x - gd.x, g.y - gd.y
        pex = cd * dx + sd * dy
        pey = -sd * dx + cd * dy
        th = wrap_angle(g.theta - gd.theta)
        if abs(th) >= math.pi - 1e-8:
            raise NearAntipodal(f"|theta_e| = {abs(th):.12f} is too close to pi")
        c, s = math.cos(th), math.sin(th)

        # z = log(g_e)
        al = _alpha(th)
        hh = 0.5 * th
        zx = al * pex + hh * pey
        zy = -hh * pex + al * pey
        r2 = zx * zx + zy * zy
        if r2 < 1e-24:
            beta, gbx, gby = 0.0, 0.0, 0.0
        else:
            beta = -math.copysign(0.5 * math.pi, zy) if zx == 0.0 else -math.atan(zy / zx)
            gbx, gby = zy / r2, -zx / r2

        # xi_e = (v - R_e^T (v_d + w_d^ p_e), w - w_d)
        ux = nud - wd * pey
        uy = wd * pex
        vex = nu - (c * ux + s * uy)
        vey = -(-s * ux + c * uy)
        wex = om - wd

        # z' = H(z) xi_e
        q = _one_minus_alpha_over_theta(th)
        h13 = q * zx + 0.5 * zy
        h23 = -0.5 * zx + q * zy
        zx_dot = al * vex - hh * vey + h13 * wex
        zy_dot = hh * vex + al * vey + h23 * wex
        beta_dot = gbx * zx_dot + gby * zy_dot

        # sliding variable: u = lam xi_u - xi_d (only x and theta rows are nonzero)
        ux_ = lam * zx - nud
        ut_ = lam * (th + k_b * beta) - wd
        w1 = (ux_ + d * ut_) / rho
        w2 = (ux_ - d * ut_) / rho
        sg1, sg2 = s1 + w1, s2 + w2
        udx = lam * zx_dot - nud_dot
        udt = lam * (wex + k_b * beta_dot) - wd_dot
        wd1 = (udx + d * udt) / rho
        wd2 = (udx - d * udt) / rho

        a1 = wd1 + k_s * sg1
        a2 = wd2 + k_s * sg2
        tau1 = -(self.m11 * a1 + self.m12 * a2)
        tau2 = -(self.m12 * a1 + self.m11 * a2)
        if self.coupling:
            # b = k1 H^T z - k2 Hbar^T (beta/|v|^2)^ v_z
            qx, qy = 0.0, 0.0
            if r2 >= 1e-24:
                cb = beta / r2
                qx, qy = k2 * cb * zy, -k2 * cb * zx
            bx = k1 * (al * zx + hh * zy) + (al * qx + hh * qy)
            bt = k1 * (h13 * zx + h23 * zy + th) + (h13 * qx + h23 * qy)
            # the middle row of AA is zero, so the v_y component of b is not needed
            tau1 += -0.5 * rho * bx - 0.5 * rho / d * bt
            tau2 += -0.5 * rho * bx + 0.5 * rho / d * bt
        f1 = self.i11 * tau1 + self.i12 * tau2
        f2 = self.i12 * tau1 + self.i11 * tau2

        V = 0.5 * k1 * (r2 + th * th) + 0.5 * k2 * beta * beta
        W = V + 0.5 * (self.m11 * (sg1 * sg1 + sg2 * sg2) + 2.0 * self.m12 * sg1 * sg2)
        g_e = PoseSE2._trusted(pex, pey, th)
        xi = np.array([nu, 0.0, om])
        residual = np.array([nu - nud + lam * zx, 0.0, om - wd + lam * (th + k_b * beta)])
        return Evaluation(np.array([f1, f2]), np.array([tau1, tau2]), np.array([sg1, sg2]),
                          V, W, g_e, xi, np.array([vex, vey, wex]), residual)


# --------------------------------------------------------------------------- #
# Law wrapper used by the simulator
# --------------------------------------------------------------------------- #

class SlidingModeLaw:
    """Closed-loop controller bound to a system, kinematic controller and reference.

    Args:
        closed_form: use the explicit spacecraft/unicycle controller when the
            system is one of those; otherwise the generic path.
        coupling: include the gradient coupling term.
    """

    def __init__(self, sys, ctrl, gains: SlidingGains,
                 desired: Optional[DesiredTrajectory] = None,
                 closed_form: bool = True, coupling: bool = True):
        self.sys = sys
        self.ctrl = ctrl
        self.gains = gains
        self.desired = desired
        self.coupling = coupling
        self.constrained = isinstance(sys, ConstrainedBundleSystem)
        self._fast = None
        if closed_form and sys.name == "spacecraft":
            self._fast = SpacecraftController(sys, gains, desired, coupling)
        elif closed_form and sys.name == "unicycle":
            self._fast = UnicycleController(sys, ctrl, gains, desired, coupling)

    def evaluate(self, t: float, state: ReducedState) -> Evaluation:
        if self._fast is not None:
            return self._fast.evaluate(t, state)
        return evaluate_law(self.sys, self.ctrl, state, self.gains, self.desired, t,
                            coupling=self.coupling)

    def force(self, t: float, state: ReducedState) -> np.ndarray:
        return self.evaluate(t, state).force

    def rate_from(self, state: ReducedState, ev: Evaluation) -> StateRate:
        if self._fast is not None and self.constrained:
            # The closed-form path already reconstructed xi; p is empty.
            return StateRate(ev.xi, state.rdot, ev.force, state.p)
        if self.constrained:
            return constrained_rhs(self.sys, state, ev.force)
        return unconstrained_rhs(self.sys, state, ev.force)

    def rhs(self, t: float, state: ReducedState) -> StateRate:
        return self.rate_from(state, self.evaluate(t, state))

    def error(self, t: float, state: ReducedState):
        g_d = self.desired.g_d(t) if self.desired is not None else self.sys.group.identity()
        return g_d.inverse() @ state.g

    def margin(self, t: float, state: ReducedState):
        """``(distance to the excluded set, log of the error)`` for the abort guard."""
        g_e = self.error(t, state)
        m = self.ctrl.critical_margin(g_e)
        if m <= 0:
            return m, None
        return m, g_e.log()


def state_on_sliding_set(law: "SlidingModeLaw", t: float, state: ReducedState) -> ReducedState:
    """Same pose, shape and momentum with ``r'`` chosen so the sliding variable vanishes.

    ``w`` does not depend on ``r'``, so ``r' <- r' - sigma`` lands exactly on
    the sliding set.
    """
    sigma = law.evaluate(t, state).sigma
    return state.replace(rdot=state.rdot - sigma)


# --------------------------------------------------------------------------- #
# Lambda certification
# --------------------------------------------------------------------------- #

@dataclass
class LambdaCertificate:
    ok: bool
    lam: float
    required: float
    sup_xi_d: float
    inf_y: float
    b1: float
    gamma: float

    def message(self) -> str:
        verdict = "satisfies" if self.ok else "does NOT satisfy"
        return (f"lambda = {self.lam:g} {verdict} the exponential-tracking rule "
                f"lambda > {self.required:.6g} (sup|xi_d|_I = {self.sup_xi_d:.6g}, "
                f"inf y = {self.inf_y:.6g}, b1 = {self.b1:.6g}, gamma = {self.gamma:.6g})")


def certify_lambda(sys, ctrl, desired: DesiredTrajectory, gains: SlidingGains, t_end: float,
                   gamma: float, n_samples: int = 4000, seed: int = 0) -> LambdaCertificate:
    """Check ``lam > sup|xi_d|_I / (inf y * sqrt(b1 gamma))`` using sampled estimates.

    ``y`` and ``b1`` come from sampling the kinematic controller (see
    :func:`geosmc.kinematic.check_definition1`) with ``b1`` measured in the
    dual of the locked-inertia metric.  A failed check emits a warning.
    """
    from .kinematic import check_definition1, default_sampler

    metric = WeightedMetric(sys.I(np.zeros(sys.dim_shape)))
    ts = np.linspace(0.0, t_end, 601)
    sup_xd = max(metric.norm(desired.xi_d(float(t))) for t in ts)
    rep = check_definition1(ctrl, n=n_samples, seed=seed)
    rng = np.random.default_rng(seed + 1)
    sampler = default_sampler(ctrl)
    b1 = math.inf
    for _ in range(n_samples):
        g = sampler(rng)
        try:
            V = ctrl.morse(g)
            gn = metric.dual_norm(ctrl.morse_body_grad(g))
        except NearAntipodal:
            continue
        if gn > 0 and V > 0:
            b1 = min(b1, V / gn ** 2)
    y = rep.prop_iv_rate_estimate
    if y > 0 and b1 > 0 and gamma > 0:
        required = sup_xd / (y * math.sqrt(b1 * gamma))
    else:
        required = math.inf
    cert = LambdaCertificate(gains.lam > required, gains.lam, required, sup_xd, y, b1, gamma)
    if not cert.ok:
        warnings.warn(cert.message(), RuntimeWarning, stacklevel=2)
    return cert


__all__ = [
    "SlidingGains", "Evaluation", "SlidingDiagnostics", "evaluate_law",
    "sliding_var_regulation", "regulation_force", "tracking_var", "tracking_force",
    "constrained_regulation_force", "constrained_tracking_force", "lyapunov_value",
    "SpacecraftController", "UnicycleController", "SlidingModeLaw",
    "LambdaCertificate", "certify_lambda", "state_on_sliding_set",
]
