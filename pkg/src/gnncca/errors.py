"""Exception hierarchy shared by all gnncca modules."""


class GnnccaError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GnnccaError):
    """Array or layer dimensions do not match what an operation requires."""


class ArgumentError(GnnccaError):
    """An argument value violates an operation's precondition."""


class DataError(GnnccaError):
    """An input file or dataset record is malformed or inconsistent."""


class ConfigError(GnnccaError):
    """A configuration value is missing, unknown, or invalid."""


class TrainingError(GnnccaError):
    """Training produced a non-finite loss or gradient."""


class ProjectionError(GnnccaError):
    """A homography projection sent a point to infinity."""
