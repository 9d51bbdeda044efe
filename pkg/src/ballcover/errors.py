"""Exception types shared across the package."""


class BallcoverError(ValueError):
    """Base class for all package errors."""


class InvalidInputError(BallcoverError):
    """Malformed or inconsistent input (dimension mismatch, bad family)."""


class InvariantViolationError(BallcoverError):
    """A type invariant is broken beyond the roundoff slack."""


class DomainError(BallcoverError):
    """Operation evaluated outside its geometric domain (cut locus etc.)."""


class InvalidTripleError(BallcoverError):
    """Three lengths do not come from an actual point triple."""


class InvalidMeasureError(BallcoverError):
    """A measure violates its contract (e.g. negative density value)."""
