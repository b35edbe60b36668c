"""Exception hierarchy for the cylinder laboratory."""


class CylError(Exception):
    """Base class for all package errors."""


class InvalidGridError(CylError):
    """Grid has too few samples or inconsistent metadata."""


class OutOfWindowError(CylError):
    """Requested window leaves the region where the quantity is defined."""


class BandError(CylError):
    """Fourier mode outside the field's frequency band."""


class PreconditionError(CylError):
    """Input violates a documented precondition (e.g. nonzero mean)."""


class OutOfBallError(CylError):
    """Point outside the closed unit ball where vector fields are defined."""


class NoContractionError(CylError):
    """Fixed-point iteration rejected: estimated contraction factor >= 0.9."""


class NonConvergenceError(CylError):
    """Iteration cap reached before the tolerance was met."""


class BallViolationError(CylError):
    """Generated solution leaves the closed unit ball."""


class InapplicableError(CylError):
    """Check skipped: the hypothesis it relies on is not satisfied."""


class ConfigError(CylError):
    """Experiment configuration failed validation."""
