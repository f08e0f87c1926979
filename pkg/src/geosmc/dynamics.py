"""
Reduced equations of motion on trivial principal bundles ``Q = G x M``.

The state is ``(g, r, r', p)``: pose on the structure group, shape
coordinates, shape velocity and body momentum.  The body velocity is
reconstructed as

    xi = -A(r) r' + I(r)^-1 p          (unconstrained)
    xi = -AA(r) r' + Ibar(r)^-1 pbar   (constrained, ``AA`` the nonholonomic connection)

and the shape obeys ``r'' = 1/2 M^-1 h - M^-1 dV + f_u``.  The bilinear
``h`` term is supplied per system as a callable; the two concrete systems
below provide closed forms.  The shape metric is assumed flat in the given
coordinates (true for the torus shapes of both examples), so the covariant
shape acceleration is ``r''``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConstraintViolation, SingularMass
from .lie import PoseSE2, Rotation3


@dataclass(frozen=True, eq=False)
class ReducedState:
    """Point of the reduced phase space.

    ``p`` is empty for systems whose momentum equation is absorbed by the
    constraint (the unicycle).
    """

    g: object
    r: np.ndarray
    rdot: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def replace(self, **kw) -> "ReducedState":
        d = dict(g=self.g, r=self.r, rdot=self.rdot, p=self.p)
        d.update(kw)
        return ReducedState(**d)


@dataclass(frozen=True, eq=False)
class StateRate:
    """Time derivative of a :class:`ReducedState`; ``xi`` drives ``g' = g xi^``."""

    xi: np.ndarray
    rdot: np.ndarray
    rddot: np.ndarray
    pdot: np.ndarray


def _as_callable(x):
    if callable(x):
        return x
    arr = np.asarray(x, dtype=float)
    return lambda r: arr


def _spd_factor(M: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise SingularMass(f"{what} is not symmetric positive definite") from None


def _left_pinv(A: np.ndarray) -> np.ndarray:
    """Generalized inverse ``(A^T A)^-1 A^T``; the plain inverse when square."""
    if A.shape[0] == A.shape[1]:
        return np.linalg.inv(A)
    return np.linalg.solve(A.T @ A, A.T)


class _BundleBase:
    """Shared caching and shape-side helpers."""

    def __init__(self, group, dim_shape: int, inertia, shape_metric,
                 h_term=None, grad_V=None, tau_G=None, constant_shape: bool = False,
                 name: str = "system"):
        self.group = group
        self.dim_shape = int(dim_shape)
        self._inertia = _as_callable(inertia)
        self._shape_metric = _as_callable(shape_metric)
        self.h_term = h_term
        self.grad_V = grad_V
        self.tau_G = tau_G
        self.constant_shape = constant_shape
        self.name = name
        self._cache: dict = {}

    def _cached(self, key, r, fn):
        if self.constant_shape:
            if key not in self._cache:
                self._cache[key] = fn(r)
            return self._cache[key]
        return fn(r)

    def I(self, r) -> np.ndarray:
        return self._cached("I", r, self._inertia)

    def I_inv(self, r) -> np.ndarray:
        return self._cached("I_inv", r, lambda r: np.linalg.inv(self.I(r)))

    def shape_metric(self, r) -> np.ndarray:
        return self._cached("m", r, self._shape_metric)

    def M_inv(self, r) -> np.ndarray:
        return self._cached("M_inv", r, lambda r: np.linalg.inv(self.M(r)))

    def dV(self, r) -> np.ndarray:
        if self.grad_V is None:
            return np.zeros(self.dim_shape)
        return np.asarray(self.grad_V(r), dtype=float)

    def tau(self, state) -> np.ndarray:
        if self.tau_G is None:
            return np.zeros(len(state.p))
        return np.asarray(self.tau_G(state), dtype=float)

    def _check_shape_input(self, f, state):
        f = np.asarray(f, dtype=float)
        if f.shape != (self.dim_shape,):
            raise ValueError(f"shape force has shape {f.shape}, expected ({self.dim_shape},)")
        if np.asarray(state.rdot).shape != (self.dim_shape,):
            raise ValueError("shape velocity has the wrong dimension")
        return f


class UnconstrainedBundleSystem(_BundleBase):
    """Reduced data ``{I(r), A(r), m(r), h, dV, tau_G}`` of an unconstrained system.

    Args:
        group: group class (``Rotation3`` or ``PoseSE2``).
        dim_shape: shape dimension.
        inertia: locked inertia ``I(r)`` (array or callable of ``r``).
        connection: mechanical connection ``A(r)``, 3 x dim_shape.
        shape_metric: ``m(r)``.
        h_term: ``h(sys, state, xi, pdot) -> covector``; zero when omitted.
        grad_V: ``dV(r)`` covector; zero when omitted.
        tau_G: external group torque ``tau_G(state)``.
        constant_shape: cache every shape-dependent quantity after first use.
    """

    def __init__(self, group, dim_shape, inertia, connection, shape_metric,
                 h_term=None, grad_V=None, tau_G=None, constant_shape=False,
                 name="unconstrained"):
        super().__init__(group, dim_shape, inertia, shape_metric, h_term, grad_V,
                         tau_G, constant_shape, name)
        self._conn = _as_callable(connection)

    def A(self, r) -> np.ndarray:
        return self._cached("A", r, self._conn)

    def A_pinv(self, r) -> np.ndarray:
        def build(r):
            A = self.A(r)
            if np.linalg.matrix_rank(A) < A.shape[1]:
                raise SingularMass("connection does not have full column rank")
            return _left_pinv(A)
        return self._cached("A_pinv", r, build)

    def M(self, r) -> np.ndarray:
        """Reduced mass ``m - A^T I A``; checked SPD."""
        def build(r):
            A = self.A(r)
            M = self.shape_metric(r) - A.T @ self.I(r) @ A
            _spd_factor(M, "reduced mass matrix")
            return M
        return self._cached("M", r, build)

    def xi(self, state: ReducedState) -> np.ndarray:
        return -self.A(state.r) @ state.rdot + self.I_inv(state.r) @ state.p

    def momentum_rate(self, state: ReducedState, xi=None) -> np.ndarray:
        """``p' = ad*_xi p + tau_G``."""
        if xi is None:
            xi = self.xi(state)
        return self.group.ad_matrix(xi).T @ state.p + self.tau(state)

    def h(self, state, xi, pdot) -> np.ndarray:
        if self.h_term is None:
            return np.zeros(self.dim_shape)
        return np.asarray(self.h_term(self, state, xi, pdot), dtype=float)

    def kinetic_energy(self, state: ReducedState) -> float:
        """``1/2 [xi; r']^T [[I, I A], [A^T I, m]] [xi; r']``."""
        r = state.r
        xi = self.xi(state)
        I = self.I(r)
        A = self.A(r)
        rd = state.rdot
        return float(0.5 * xi @ I @ xi + xi @ I @ A @ rd + 0.5 * rd @ self.shape_metric(r) @ rd)


class ConstrainedBundleSystem(_BundleBase):
    """Reduced data of a system with invariant nonholonomic constraints.

    Args:
        constrained_basis: 3 x k matrix whose columns span the constrained
            algebra (velocities allowed by the constraint).
        nh_connection: nonholonomic connection ``AA(r)``, 3 x dim_shape.
        connection: mechanical connection ``A(r)``; zero when omitted.
        projection: ``P_M`` applied to ``dV``; identity when omitted.

    The momentum ``pbar`` lives on the part of the constrained algebra not
    reached by shape motion.  Its basis is computed numerically as the
    orthogonal complement of ``image(AA)`` inside the constrained algebra and
    is empty when the connection already spans it.
    """

    def __init__(self, group, dim_shape, inertia, nh_connection, shape_metric,
                 constrained_basis, connection=None, nh_connection_pinv=None,
                 h_term=None, grad_V=None, tau_G=None, projection=None,
                 constant_shape=False, basis_derivative=None, name="constrained"):
        super().__init__(group, dim_shape, inertia, shape_metric, h_term, grad_V,
                         tau_G, constant_shape, name)
        self._nh = _as_callable(nh_connection)
        self._nh_pinv = None if nh_connection_pinv is None else _as_callable(nh_connection_pinv)
        self._conn = _as_callable(connection if connection is not None
                                  else np.zeros((3, dim_shape)))
        B = np.asarray(constrained_basis, dtype=float)
        q, _ = np.linalg.qr(B)
        self.constrained_basis = q  # orthonormal columns
        self.projection = projection
        self.basis_derivative = basis_derivative

    # --- connection data -------------------------------------------------- #
    def AA(self, r) -> np.ndarray:
        return self._cached("AA", r, self._nh)

    def AA_pinv(self, r) -> np.ndarray:
        def build(r):
            if self._nh_pinv is not None:
                return np.asarray(self._nh_pinv(r), dtype=float)
            AA = self.AA(r)
            if np.linalg.matrix_rank(AA) < AA.shape[1]:
                raise SingularMass("nonholonomic connection does not have full column rank")
            return _left_pinv(AA)
        return self._cached("AA_pinv", r, build)

    def A(self, r) -> np.ndarray:
        return self._cached("A", r, self._conn)

    def M(self, r) -> np.ndarray:
        """``Mbar = (m - A^T I A) + At^T I At`` with ``At = A - AA``; checked SPD."""
        def build(r):
            A = self.A(r)
            I = self.I(r)
            At = A - self.AA(r)
            M = self.shape_metric(r) - A.T @ I @ A + At.T @ I @ At
            _spd_factor(M, "constrained reduced mass matrix")
            return M
        return self._cached("M", r, build)

    def vertical_basis(self, r) -> np.ndarray:
        """Columns spanning the constrained algebra minus ``image(AA)``."""
        def build(r):
            B = self.constrained_basis
            img = B.T @ self.AA(r)           # image of AA in basis coordinates
            u, s, _ = np.linalg.svd(img)
            rank = int(np.sum(s > 1e-12 * max(1.0, s.max(initial=0.0))))
            return B @ u[:, rank:]
        return self._cached("vbasis", r, build)

    def momentum_dim(self, r=None) -> int:
        return self.vertical_basis(r).shape[1]

    def Ibar_inv(self, r) -> np.ndarray:
        """Map from ``pbar`` coordinates to algebra velocity."""
        def build(r):
            E = self.vertical_basis(r)
            if E.shape[1] == 0:
                return np.zeros((3, 0))
            return E @ np.linalg.inv(E.T @ self.I(r) @ E)
        return self._cached("Ibar_inv", r, build)

    # --- constraint ------------------------------------------------------- #
    def constraint_residual(self, xi) -> float:
        """Norm of the component of ``xi`` outside the constrained algebra."""
        B = self.constrained_basis
        xi = np.asarray(xi, dtype=float)
        return float(np.linalg.norm(xi - B @ (B.T @ xi)))

    def P_M(self, covector) -> np.ndarray:
        if self.projection is None:
            return np.asarray(covector, dtype=float)
        return np.asarray(self.projection(covector), dtype=float)

    # --- reconstruction --------------------------------------------------- #
    def xi(self, state: ReducedState) -> np.ndarray:
        r = state.r
        out = -self.AA(r) @ state.rdot
        if len(state.p):
            out = out + self.Ibar_inv(r) @ state.p
        return out

    def momentum_rate(self, state: ReducedState, xi=None) -> np.ndarray:
        """``pbar_i' = <I(xi + A r'); [xi, e_i] + (de_i/dr) r'> + tau``."""
        if len(state.p) == 0:
            return np.zeros(0)
        if xi is None:
            xi = self.xi(state)
        r = state.r
        E = self.vertical_basis(r)
        mom = self.I(r) @ (xi + self.A(r) @ state.rdot)
        ad = self.group.ad_matrix(xi)
        out = np.array([mom @ (ad @ E[:, i]) for i in range(E.shape[1])])
        if self.basis_derivative is not None:
            dE = self.basis_derivative(r, state.rdot)
            out = out + np.array([mom @ dE[:, i] for i in range(E.shape[1])])
        return out + self.tau(state)

    def h(self, state, xi, pdot) -> np.ndarray:
        if self.h_term is None:
            return np.zeros(self.dim_shape)
        return np.asarray(self.h_term(self, state, xi, pdot), dtype=float)

    def kinetic_energy(self, state: ReducedState) -> float:
        xi = self.xi(state)
        rd = state.rdot
        r = state.r
        I = self.I(r)
        return float(0.5 * xi @ I @ xi + xi @ I @ self.A(r) @ rd
                     + 0.5 * rd @ self.shape_metric(r) @ rd)


# --------------------------------------------------------------------------- #
# Right-hand sides
# --------------------------------------------------------------------------- #

def unconstrained_rhs(sys: UnconstrainedBundleSystem, state: ReducedState, f_u) -> StateRate:
    """Reduced dynamics of an unconstrained system under shape force ``f_u``.

    Raises:
        SingularMass: if the reduced mass matrix is not SPD.
    """
    f_u = sys._check_shape_input(f_u, state)
    r = state.r
    xi = sys.xi(state)
    pdot = sys.momentum_rate(state, xi)
    Minv = sys.M_inv(r)
    rddot = Minv @ (0.5 * sys.h(state, xi, pdot) - sys.dV(r)) + f_u
    return StateRate(xi, np.asarray(state.rdot, dtype=float), rddot, pdot)


CONSTRAINT_TOL = 1e-9


def constrained_rhs(sys: ConstrainedBundleSystem, state: ReducedState, fbar_u) -> StateRate:
    """Reduced dynamics of a constrained system under shape force ``fbar_u``.

    Raises:
        ConstraintViolation: if the reconstructed velocity leaves the
            constrained algebra by more than 1e-9.
    """
    fbar_u = sys._check_shape_input(fbar_u, state)
    r = state.r
    xi = sys.xi(state)
    res = sys.constraint_residual(xi)
    if res > CONSTRAINT_TOL:
        raise ConstraintViolation(f"velocity leaves the constraint distribution by {res:.3e}")
    pdot = sys.momentum_rate(state, xi)
    Minv = sys.M_inv(r)
    rddot = Minv @ (0.5 * sys.h(state, xi, pdot) - sys.P_M(sys.dV(r))) + fbar_u
    return StateRate(xi, np.asarray(state.rdot, dtype=float), rddot, pdot)


def system_rhs(sys, state, force) -> StateRate:
    if isinstance(sys, ConstrainedBundleSystem):
        return constrained_rhs(sys, state, force)
    return unconstrained_rhs(sys, state, force)


# --------------------------------------------------------------------------- #
# Spacecraft with three reaction wheels
# --------------------------------------------------------------------------- #

DEFAULT_SPACECRAFT_J = np.array([[1.0, 0.02, -0.01],
                                 [0.02, 1.2, 0.03],
                                 [-0.01, 0.03, 0.8]])


@dataclass(frozen=True, eq=False)
class SpacecraftParams:
    """Platform inertia ``J`` and diagonal wheel inertia ``J_phi`` (kg m^2)."""

    J: np.ndarray = field(default_factory=lambda: DEFAULT_SPACECRAFT_J.copy())
    J_phi: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(3))

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        Jp = np.array(self.J_phi, dtype=float)
        if Jp.ndim == 1:
            Jp = np.diag(Jp)
        if J.shape != (3, 3) or Jp.shape != (3, 3):
            raise ValueError("J and J_phi must be 3x3")
        if np.abs(J - J.T).max() > 1e-12:
            raise ValueError("J must be symmetric")
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            raise ValueError("J must be positive definite") from None
        if np.abs(Jp - np.diag(np.diag(Jp))).max() > 0 or np.any(np.diag(Jp) <= 0):
            raise ValueError("J_phi must be diagonal with positive entries")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_phi", Jp)


def spacecraft_system(params: Optional[SpacecraftParams] = None) -> UnconstrainedBundleSystem:
    """Rigid platform on SO(3) actuated by three wheels with angles ``phi`` in T^3.

    ``I = J + J_phi``, ``A = I^-1 J_phi``, ``m = J_phi`` and the bilinear
    term is ``h = -2 A^T p'``.
    """
    params = params or SpacecraftParams()
    J, Jp = params.J, params.J_phi
    I = J + Jp
    A = np.linalg.solve(I, Jp)

    def h_term(sys, state, xi, pdot):
        return -2.0 * A.T @ pdot

    sys = UnconstrainedBundleSystem(Rotation3, 3, I, A, Jp, h_term=h_term,
                                    constant_shape=True, name="spacecraft")
    sys.params = params
    sys.A_inv_closed = np.linalg.solve(Jp, I)  # J_phi^-1 (J + J_phi)
    sys.M(np.zeros(3))  # SPD check at construction
    return sys


# --------------------------------------------------------------------------- #
# Unicycle (differential drive)
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class UnicycleParams:
    """Differential-drive robot; defaults are the reference robot."""

    mu: float = 3.0         # kg, robot mass
    J_R: float = 0.025      # kg m^2, robot inertia about its centre
    J_sigma: float = 6e-5   # kg m^2, wheel inertia
    rho: float = 0.05       # m, wheel radius
    d: float = 0.165        # m, half axle length

    def __post_init__(self):
        for k in ("mu", "J_R", "J_sigma", "rho", "d"):
            v = getattr(self, k)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be positive, got {v}")


def unicycle_connection(params: UnicycleParams) -> np.ndarray:
    rho, d = params.rho, params.d
    return np.array([[-rho / 2, -rho / 2],
                     [0.0, 0.0],
                     [-rho / (2 * d), rho / (2 * d)]])


def unicycle_connection_pinv(params: UnicycleParams) -> np.ndarray:
    rho, d = params.rho, params.d
    return np.array([[-1 / rho, 0.0, -d / rho],
                     [-1 / rho, 0.0, d / rho]])


def unicycle_system(params: Optional[UnicycleParams] = None) -> ConstrainedBundleSystem:
    """Unicycle on SE(2) x T^2 with no-slip wheels.

    ``I = diag(mu, mu, J_R)``, ``m = J_sigma I_2``, ``A = 0`` and the
    constrained algebra is ``{v_y = 0}``.  The momentum equation is absorbed
    (``image(AA)`` spans the constrained algebra), so states carry no ``p``.
    """
    params = params or UnicycleParams()
    AA = unicycle_connection(params)
    sys = ConstrainedBundleSystem(
        PoseSE2, 2,
        inertia=np.diag([params.mu, params.mu, params.J_R]),
        nh_connection=AA,
        nh_connection_pinv=unicycle_connection_pinv(params),
        shape_metric=params.J_sigma * np.eye(2),
        constrained_basis=np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]),
        constant_shape=True,
        name="unicycle",
    )
    sys.params = params
    sys.M(np.zeros(2))
    return sys


def no_slip_residual(pose: PoseSE2, pose_rate, sigma_dot, params: UnicycleParams) -> np.ndarray:
    """The three rolling-without-slipping expressions.

    Args:
        pose: ``(x, y, theta)``.
        pose_rate: ``(x', y', theta')``.
        sigma_dot: wheel rates.
    """
    xd, yd, thd = (float(v) for v in pose_rate)
    s1, s2 = float(sigma_dot[0]), float(sigma_dot[1])
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    rho, d = params.rho, params.d
    return np.array([
        xd * c + yd * s - 0.5 * rho * (s1 + s2),
        -xd * s + yd * c,
        thd - rho / (2 * d) * (s1 - s2),
    ])


def pose_rate(g: PoseSE2, xi) -> np.ndarray:
    """World-frame ``(x', y', theta')`` from a body velocity."""
    c, s = math.cos(g.theta), math.sin(g.theta)
    return np.array([c * xi[0] - s * xi[1], s * xi[0] + c * xi[1], xi[2]])


def state_no_slip_residual(sys: ConstrainedBundleSystem, state: ReducedState) -> np.ndarray:
    """``no_slip_residual`` evaluated from a reduced unicycle state."""
    xi = sys.xi(state)
    return no_slip_residual(state.g, pose_rate(state.g, xi), state.rdot, sys.params)
