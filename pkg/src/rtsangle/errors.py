"""Exception hierarchy for the simulator."""


class RtsAngleError(Exception):
    """Base class for all simulator errors."""


class InvalidConfigError(RtsAngleError, ValueError):
    pass


class DegenerateLayoutError(RtsAngleError, ValueError):
    """Front ends do not span a proper left/right, bottom/top rectangle."""


class DomainError(RtsAngleError, ValueError):
    pass


class UnsupportedRangeError(RtsAngleError, ValueError):
    """Beat tone of a channel would alias at the configured sample rate."""


class DimensionError(RtsAngleError, ValueError):
    pass


class NoDetectionError(RtsAngleError):
    pass


class ConstraintError(RtsAngleError, ValueError):
    """Closed-form model requested for an array it does not describe."""


class UnsolvableError(RtsAngleError):
    pass


class FlatSpectrumError(RtsAngleError):
    pass


class IncompleteCalibrationError(RtsAngleError):
    pass
