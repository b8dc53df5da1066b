"""Exception types shared across the package."""


class SwitchflowError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrixError(SwitchflowError):
    """Drive matrix U(x) = (u1(x), u0(x)) is numerically singular.

    Raised when |det U| falls below the hard floor 1e-12, i.e. the two
    vector fields fail to span the tangent plane at the offending point.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class IntegrationFailure(SwitchflowError):
    """A flow integration produced non-finite state (blow-up or bad field)."""

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context


class DiffeoInversionError(SwitchflowError):
    """Fixed-point inversion of a torus diffeomorphism did not converge."""


class ConfigError(SwitchflowError):
    """Invalid or incomplete experiment configuration."""


class EmptyInputError(SwitchflowError):
    """An estimator received no usable data (e.g. no segments in a mode)."""
