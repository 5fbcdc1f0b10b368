"""Exception hierarchy shared by every module in the package."""


class HamopError(Exception):
    """Base class for all package errors."""


class CholeskyFailure(HamopError):
    """Covariance matrix could not be factorized even after jitter escalation."""


class DegenerateSpline(HamopError, ValueError):
    """Too few control points for the requested spline degree."""


class NonMonotoneAbscissa(HamopError):
    """The abscissa q(lambda) of a spline curve is not strictly increasing."""


class InfeasibleStratum(HamopError, ValueError):
    """A stratified sampling interval is empty."""


class GenerationFailure(HamopError):
    """Potential generation failed after the maximum number of retries."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DomainEscape(HamopError):
    """An integrated trajectory left the (widened) potential domain."""


class FixedPointDivergence(HamopError):
    """Implicit stage equations did not converge within the iteration budget."""


class OutOfRange(HamopError, ValueError):
    """Argument outside the interval on which a closed form is defined."""


class LengthMismatch(HamopError, ValueError):
    pass


class GridMismatch(HamopError, ValueError):
    pass


class EmptyInput(HamopError, ValueError):
    pass


class ShapeMismatch(HamopError, ValueError):
    pass


class DivergenceDetected(HamopError):
    """Training loss became non-finite; ``history`` holds the epochs run so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class InteriorBoundViolated(HamopError):
    """The cubic extension reaches or exceeds V0 strictly inside (Q, 1)."""


class NonMonotoneBase(HamopError, ValueError):
    """Base potential is not strictly below V0 on the integration interval."""


class FormatError(HamopError):
    """Corrupt or unsupported file header."""


class SizeMismatch(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class InvariantViolation(HamopError, ValueError):
    pass


class IoFailure(HamopError, OSError):
    """Reading or writing a file failed at the operating-system level."""
