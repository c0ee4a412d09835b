"""Exception hierarchy for raylength."""


class RayLengthError(Exception):
    """Base class for all errors raised by this package."""


class NotOnSurface(RayLengthError, ValueError):
    pass


class DegenerateSegment(RayLengthError, ValueError):
    pass


class ThetaEqualsOmega(RayLengthError, ValueError):
    """Raised when the outgoing direction coincides with the incoming one."""


class NoConvergence(RayLengthError):
    pass


class ObstructedPath(RayLengthError):
    pass


class TangentRay(RayLengthError):
    pass


class WrongReflectionCount(RayLengthError):
    pass


class TangencyEncountered(RayLengthError):
    pass


class SingularHit(RayLengthError):
    pass


class NotApplicable(RayLengthError):
    pass


class DegenerateRay(RayLengthError):
    pass


class GrazingExit(RayLengthError):
    pass


class SingularHessian(RayLengthError):
    pass


class SeedNotTrapped(RayLengthError):
    pass


class SeedNotFree(RayLengthError):
    pass


class RefinementFailed(RayLengthError):
    pass


class TruncationNotConverged(RayLengthError):
    pass


class RecurrenceOverflow(RayLengthError, OverflowError):
    pass


class BandTooNarrow(RayLengthError, ValueError):
    pass


class ParseError(RayLengthError, ValueError):
    """Malformed scene text. Carries the 1-based ``line`` and ``column``."""

    def __init__(self, message, line=0, column=0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(RayLengthError, ValueError):
    pass
