"""Exception types shared across the package."""


class RicciLabError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(RicciLabError):
    """Bad user-supplied data: malformed config, out-of-range parameter, ..."""


class DegenerateMetricError(InvalidInputError):
    """A metric (or candidate metric) fails positive-definiteness."""


class DegenerateCovectorError(InvalidInputError):
    """A covector required to be nonzero vanishes (within tolerance)."""


class InconsistentStateError(RicciLabError):
    """A state violates an integral/compatibility constraint it must satisfy."""


class InapplicableError(RicciLabError):
    """An operation's mathematical preconditions do not hold for this input."""


class NumericalFailureError(RicciLabError):
    """Integration or iteration broke down (step underflow, NaN, divergence).

    Carries the last good state so callers can inspect how far the
    computation got.
    """

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state
