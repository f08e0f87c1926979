"""
Group and algebra operations on SO(3) and SE(2).

Algebra elements are plain length-3 float arrays:

* so(3):  ``w = (w1, w2, w3)``, identified with ``hat(w)``.
* se(2):  ``xi = (vx, vy, omega)``, identified with
  ``[[omega^, v], [0, 0]]``.

Group elements are immutable value objects (:class:`Rotation3`,
:class:`PoseSE2`).  Both expose the same small surface used by the generic
bundle and sliding code: ``identity``, ``compose``/``@``, ``inverse``,
``Ad``, ``matrix`` and the class-level ``exp``, ``log`` and ``ad``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearAntipodal

# Angle below which closed forms are replaced by 4th-order Taylor series.
SMALL_ANGLE = 1e-4
# Half-width of the excluded band around the log-map singularity.
EPS_LOG = 1e-8

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(theta, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


# --------------------------------------------------------------------------- #
# SO(3)
# --------------------------------------------------------------------------- #

def hat(w) -> np.ndarray:
    """3-vector -> skew-symmetric matrix (so(3) wedge)."""
    w1, w2, w3 = float(w[0]), float(w[1]), float(w[2])
    return np.array([[0.0, -w3, w2],
                     [w3, 0.0, -w1],
                     [-w2, w1, 0.0]])


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (much cheaper than ``np.cross`` for one pair)."""
    a1, a2, a3 = float(a[0]), float(a[1]), float(a[2])
    b1, b2, b3 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])


def vee(m: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix -> 3-vector.  Only the skew part is read."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _skew_vee(m: np.ndarray) -> np.ndarray:
    # (m - m^T)^vee
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


@dataclass(frozen=True, eq=False)
class Rotation3:
    """Rotation matrix on SO(3).

    The constructor validates orthogonality and determinant to 1e-9; group
    operations build results through :meth:`_trusted` and skip the check.
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {m.shape}")
        if np.abs(m.T @ m - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("matrix is not a proper rotation (R^T R = I, det R = 1)")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def _trusted(cls, m: np.ndarray) -> "Rotation3":
        obj = object.__new__(cls)
        object.__setattr__(obj, "m", m)
        return obj

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls._trusted(np.eye(3))

    @staticmethod
    def exp(w) -> "Rotation3":
        return so3_exp(w)

    @staticmethod
    def ad(a, b) -> np.ndarray:
        return so3_ad(a, b)

    @staticmethod
    def ad_matrix(a) -> np.ndarray:
        """Matrix of ``b -> ad_a b``."""
        return hat(a)

    def log(self) -> np.ndarray:
        return so3_log(self)

    def compose(self, other: "Rotation3") -> "Rotation3":
        return Rotation3._trusted(self.m @ other.m)

    __matmul__ = compose

    def inverse(self) -> "Rotation3":
        return Rotation3._trusted(self.m.T.copy())

    def Ad(self) -> np.ndarray:
        return self.m

    def matrix(self) -> np.ndarray:
        return self.m

    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1] + self.m[2, 2])

    def orthonormalized(self) -> "Rotation3":
        """One Gram-Schmidt pass over the columns."""
        c0 = self.m[:, 0]
        c0 = c0 / np.linalg.norm(c0)
        c1 = self.m[:, 1] - (c0 @ self.m[:, 1]) * c0
        c1 = c1 / np.linalg.norm(c1)
        c2 = cross3(c0, c1)
        return Rotation3._trusted(np.column_stack((c0, c1, c2)))

    def distance_frobenius(self) -> float:
        """``||I - R||_F``."""
        return float(np.linalg.norm(np.eye(3) - self.m))

    def __repr__(self):
        return f"Rotation3({np.array2string(self.m, precision=6)})"


def so3_exp(w) -> Rotation3:
    """Rodrigues formula, with a Taylor branch for small angles."""
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    th = math.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th2
    # I + a W + b W^2 with W^2 = w w^T - |w|^2 I
    w1, w2, w3 = float(w[0]), float(w[1]), float(w[2])
    c = 1.0 - b * th2
    return Rotation3._trusted(np.array([
        [c + b * w1 * w1, b * w1 * w2 - a * w3, b * w1 * w3 + a * w2],
        [b * w1 * w2 + a * w3, c + b * w2 * w2, b * w2 * w3 - a * w1],
        [b * w1 * w3 - a * w2, b * w2 * w3 + a * w1, c + b * w3 * w3]]))


def so3_log(R: Rotation3) -> np.ndarray:
    """Log map of SO(3) returned as a 3-vector.

    Raises:
        NearAntipodal: if ``tr(R) <= -1 + EPS_LOG`` (rotation angle near pi).
    """
    m = R.m
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr <= -1.0 + EPS_LOG:
        raise NearAntipodal(f"tr(R) = {tr:.3e} is within {EPS_LOG:g} of -1")
    s = _skew_vee(m)  # = 2 sin(theta) * axis
    th = math.atan2(0.5 * math.sqrt(float(s @ s)), 0.5 * (tr - 1.0))
    if th < SMALL_ANGLE:
        th2 = th * th
        f = 0.5 + th2 / 12.0 + 7.0 * th2 * th2 / 720.0
    else:
        f = th / (2.0 * math.sin(th))
    return f * s


def so3_angle(R: Rotation3) -> float:
    """Rotation angle in [0, pi]."""
    m = R.m
    s = _skew_vee(m)
    return math.atan2(0.5 * math.sqrt(float(s @ s)), 0.5 * (m[0, 0] + m[1, 1] + m[2, 2] - 1.0))


def so3_ad(a, b) -> np.ndarray:
    """Lie bracket on so(3): the cross product."""
    return cross3(a, b)


def so3_right_jacobian_inv(w) -> np.ndarray:
    """Inverse right Jacobian: d/dt log(R)^vee = Jr^-1(log R) Omega when R' = R Omega^."""
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    th = math.sqrt(th2)
    W = hat(w)
    if th < SMALL_ANGLE:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        c = 1.0 / th2 - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
    return np.eye(3) + 0.5 * W + c * (W @ W)


def rot_x(a: float) -> Rotation3:
    return so3_exp((a, 0.0, 0.0))


def rot_y(a: float) -> Rotation3:
    return so3_exp((0.0, a, 0.0))


def rot_z(a: float) -> Rotation3:
    return so3_exp((0.0, 0.0, a))


# --------------------------------------------------------------------------- #
# SE(2)
# --------------------------------------------------------------------------- #

def _alpha(theta: float) -> float:
    # (theta/2) cot(theta/2)
    if abs(theta) < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 12.0 - t2 * t2 / 720.0
    h = 0.5 * theta
    return h * math.cos(h) / math.sin(h)


def _one_minus_alpha_over_theta(theta: float) -> float:
    if abs(theta) < SMALL_ANGLE:
        return theta / 12.0 + theta ** 3 / 720.0
    return (1.0 - _alpha(theta)) / theta


@dataclass(frozen=True)
class PoseSE2:
    """Planar pose ``(p, R(theta))``; ``theta`` is stored wrapped to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def _trusted(cls, x: float, y: float, theta: float) -> "PoseSE2":
        obj = object.__new__(cls)
        object.__setattr__(obj, "x", x)
        object.__setattr__(obj, "y", y)
        object.__setattr__(obj, "theta", wrap_angle(theta))
        return obj

    @classmethod
    def from_p(cls, p, theta: float) -> "PoseSE2":
        return cls(p[0], p[1], theta)

    @classmethod
    def identity(cls) -> "PoseSE2":
        return cls._trusted(0.0, 0.0, 0.0)

    @staticmethod
    def exp(z) -> "PoseSE2":
        return se2_exp(z)

    @staticmethod
    def ad(a, b) -> np.ndarray:
        return se2_ad(a, b)

    @staticmethod
    def ad_matrix(a) -> np.ndarray:
        """Matrix of ``b -> ad_a b``."""
        vx, vy, w = float(a[0]), float(a[1]), float(a[2])
        return np.array([[0.0, -w, vy],
                         [w, 0.0, -vx],
                         [0.0, 0.0, 0.0]])

    @property
    def p(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def log(self) -> np.ndarray:
        return se2_log(self)

    def compose(self, other: "PoseSE2") -> "PoseSE2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PoseSE2._trusted(c * other.x - s * other.y + self.x,
                                s * other.x + c * other.y + self.y,
                                self.theta + other.theta)

    __matmul__ = compose

    def inverse(self) -> "PoseSE2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PoseSE2._trusted(-(c * self.x + s * self.y),
                                -(-s * self.x + c * self.y),
                                -self.theta)

    def Ad(self) -> np.ndarray:
        return se2_Ad(self)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x],
                         [s, c, self.y],
                         [0.0, 0.0, 1.0]])

    def distance_frobenius(self) -> float:
        """``||I_3 - g||_F`` on the homogeneous form."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return math.sqrt(2.0 * (1.0 - c) ** 2 + 2.0 * s * s + self.x ** 2 + self.y ** 2)


def se2_compose(g1: PoseSE2, g2: PoseSE2) -> PoseSE2:
    return g1.compose(g2)


def se2_inverse(g: PoseSE2) -> PoseSE2:
    return g.inverse()


def se2_Einv(theta: float) -> np.ndarray:
    """``E^-1(theta)``, mapping translation to the log's linear part."""
    a = _alpha(theta)
    return np.array([[a, 0.5 * theta], [-0.5 * theta, a]])


def se2_log(g: PoseSE2) -> np.ndarray:
    """Log map of SE(2) as ``(vz_x, vz_y, theta)``.

    Raises:
        NearAntipodal: if ``|theta| >= pi - EPS_LOG``.
    """
    th = g.theta
    if abs(th) >= math.pi - EPS_LOG:
        raise NearAntipodal(f"|theta| = {abs(th):.12f} is within {EPS_LOG:g} of pi")
    a = _alpha(th)
    h = 0.5 * th
    return np.array([a * g.x + h * g.y, -h * g.x + a * g.y, th])


def se2_exp(z) -> PoseSE2:
    vx, vy, th = float(z[0]), float(z[1]), float(z[2])
    if abs(th) < SMALL_ANGLE:
        t2 = th * th
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = th / 2.0 - th * t2 / 24.0 + th * t2 * t2 / 720.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th
    return PoseSE2._trusted(a * vx - b * vy, b * vx + a * vy, th)


def se2_Ad(g: PoseSE2) -> np.ndarray:
    c, s = math.cos(g.theta), math.sin(g.theta)
    return np.array([[c, -s, g.y],
                     [s, c, -g.x],
                     [0.0, 0.0, 1.0]])


def se2_ad(x1, x2) -> np.ndarray:
    """``ad_{x1} x2 = (w1^ v2 - w2^ v1, 0)``."""
    w1, w2 = float(x1[2]), float(x2[2])
    return np.array([-w1 * x2[1] + w2 * x1[1],
                     w1 * x2[0] - w2 * x1[0],
                     0.0])


def se2_H(z) -> np.ndarray:
    """Rate matrix of the SE(2) log: ``d/dt z = H(z) xi`` for ``g' = g xi^``."""
    vx, vy, th = float(z[0]), float(z[1]), float(z[2])
    a = _alpha(th)
    q = _one_minus_alpha_over_theta(th)
    h = 0.5 * th
    # E^{-T} and (1/theta)(I - E^{-T}) vz
    return np.array([[a, -h, q * vx + 0.5 * vy],
                     [h, a, -0.5 * vx + q * vy],
                     [0.0, 0.0, 1.0]])


# --------------------------------------------------------------------------- #
# Metrics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class WeightedMetric:
    """Inner product ``<a, b>_W = a^T W b`` on a 3-dimensional algebra."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        w = 0.5 * (w + w.T)
        try:
            L = np.linalg.cholesky(w)
        except np.linalg.LinAlgError:
            raise ValueError("metric matrix is not positive definite") from None
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "_chol", L)

    @classmethod
    def euclidean(cls, n: int = 3) -> "WeightedMetric":
        return cls(np.eye(n))

    def inner(self, a, b) -> float:
        return float(np.asarray(a) @ self.w @ np.asarray(b))

    def norm(self, a) -> float:
        return math.sqrt(max(self.inner(a, a), 0.0))

    def dual_norm(self, alpha) -> float:
        """Norm of a covector under the inverse metric."""
        y = np.linalg.solve(self._chol, np.asarray(alpha, dtype=float))
        return float(np.linalg.norm(y))

    def operator_frobenius_sq(self, M) -> float:
        """Squared Frobenius norm of a linear operator in a W-orthonormal basis."""
        L = self._chol
        B = L.T @ np.asarray(M, dtype=float) @ np.linalg.inv(L.T)
        return float(np.sum(B * B))
