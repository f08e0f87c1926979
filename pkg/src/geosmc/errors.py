"""Exception types shared across the package."""


class GeometricControlError(Exception):
    """Base class for all package errors."""


class NearAntipodal(GeometricControlError, ValueError):
    """The group element lies inside the excluded critical set of the log map."""


class SingularMass(GeometricControlError, ArithmeticError):
    """A mass or inertia matrix failed its positive-definiteness check."""


class ConstraintViolation(GeometricControlError, ValueError):
    """A state breaks the nonholonomic constraint beyond tolerance."""


class DegeneratePath(GeometricControlError, ValueError):
    """A planar reference path has (near) zero speed, so its heading is undefined."""


class AbortNearCriticalSet(GeometricControlError):
    """A simulation entered the neighbourhood of the critical set and was stopped.

    Attributes:
        t: simulation time at which the guard fired.
        state: the offending state.
        margin: distance-to-critical-set measure at that time.
    """

    def __init__(self, message, t=None, state=None, margin=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.margin = margin


class ConfigError(GeometricControlError, ValueError):
    """Scenario configuration is malformed or invalid."""
