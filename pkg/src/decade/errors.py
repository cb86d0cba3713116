"""Exception hierarchy shared by every module.

The classes are grouped so the command-line front end can map them onto
exit codes: configuration problems, data/parse problems and numeric or
training-state problems.
"""


class DecadeError(Exception):
    """Base class for all errors raised by this package."""


# configuration (exit code 2)


class ConfigurationError(DecadeError, ValueError):
    """Invalid sizes, options, paths or pipeline prerequisites."""


class DimensionError(ConfigurationError):
    """Array shapes do not conform."""


class DependencyError(ConfigurationError):
    """A pipeline step was requested before the step it depends on."""


# data (exit code 3)


class DataError(DecadeError, ValueError):
    """Malformed or unusable input data."""


class ParseError(DataError):
    """A text record could not be parsed.

    ``lineno`` is the 1-based line (or row) number when known.
    """

    def __init__(self, message, lineno=None, source=None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DegenerateBoxError(DataError):
    """A bounding box has zero (or negative) area."""


class DomainError(DataError):
    """A value lies outside the domain an operation is defined on."""


class EmptySetError(DataError):
    """A statistic was requested over an empty set."""


class EncodingError(DataError):
    """A class name cannot be encoded."""


class EmptyMatchError(DataError):
    """No detection could be matched to a ground-truth box."""


class CheckpointError(DataError):
    """Base class for checkpoint loading failures."""


class CheckpointVersionError(CheckpointError):
    """Wrong magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended before all declared data was read."""


class CheckpointShapeError(CheckpointError):
    """Stored layer shapes do not conform to each other or to a target network."""


# numeric / training state (exit code 4)


class NumericError(DecadeError, RuntimeError):
    """Non-finite values or a failed numeric procedure."""


class StateError(NumericError):
    """An operation was invoked in the wrong state (e.g. backward before forward)."""
