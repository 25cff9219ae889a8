"""Exception types shared across the package."""


class ChunkGlmError(Exception):
    """Base class for all package errors."""


class ShapeError(ChunkGlmError):
    """Array arguments have incompatible dimensions."""


class RankError(ChunkGlmError):
    """The accumulated design is numerically rank deficient."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"rank deficiency detected at column {column}")


class SchemaError(ChunkGlmError):
    """A column named in the schema is missing from the data."""


class ParseError(ChunkGlmError):
    """A cell could not be parsed as a number."""

    def __init__(self, row: int, column: str, message: str | None = None):
        self.row = row
        self.column = column
        super().__init__(message or f"non-numeric value at row {row}, column {column!r}")


class ReadError(ChunkGlmError):
    """An I/O failure occurred while streaming data."""


class NotRewindableError(ChunkGlmError):
    """The underlying stream cannot be reset to its start."""


class NotApplicableError(ChunkGlmError):
    """The requested quantity does not exist for this family."""


class DegreesOfFreedomError(ChunkGlmError):
    """Too few observations for the requested estimate (n <= p)."""


class DegenerateRegressorError(ChunkGlmError):
    """The regressor in a recovery regression is constant."""


class DivergenceError(ChunkGlmError):
    """Coefficients grew past the divergence guard mid-fit."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(
            f"coefficient {index} reached {value:.3e}; estimates appear to diverge"
        )
