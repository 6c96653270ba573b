"""Exception hierarchy shared by all megdecode modules."""


class MegdecodeError(Exception):
    """Base class for all package errors."""


class DimensionError(MegdecodeError):
    """Array shapes incompatible with the requested operation."""


class ParameterError(MegdecodeError):
    """Invalid argument value (out of range, wrong sign, missing subject...)."""


class SingularityError(MegdecodeError):
    """A matrix that must be invertible (after ridge) is not."""


class StabilityError(MegdecodeError):
    """An autoregressive specification has roots on or outside the unit circle."""


class FormatError(MegdecodeError):
    """A binary file failed validation (magic, version, truncation, sizes)."""


class TrainingError(MegdecodeError):
    """Training aborted, e.g. a non-finite gradient or loss."""
