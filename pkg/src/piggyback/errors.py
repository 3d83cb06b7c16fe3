"""Exception types shared across the package."""


class PiggybackError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBoundsError(PiggybackError):
    """A coordinate falls outside the grid rectangle."""


class EmptyDatasetError(PiggybackError):
    """An operation that needs at least one order was given none."""


class EmptySamplesError(PiggybackError):
    """A distribution fit was requested on an empty sample set."""


class InsufficientSamplesError(PiggybackError):
    """Too few samples to fit the requested distribution."""


class NonPositiveDefiniteError(PiggybackError):
    """A covariance matrix is not positive definite."""


class InvalidDecisionError(PiggybackError):
    """A planner decision references an order outside the candidate set."""


class ConfigError(PiggybackError):
    """Bad simulation or CLI configuration (unknown planner, bad sweep)."""


class ParseError(PiggybackError):
    """A data file row failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(PiggybackError):
    """A data file header does not match the expected schema."""


class VersionMismatchError(PiggybackError):
    """A model file was written by an incompatible format version."""


class CorruptFileError(PiggybackError):
    """A model file failed its integrity check."""
