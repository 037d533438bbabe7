"""Exception types shared across the package."""


class SledError(Exception):
    """Base class for data and computation errors raised by this package."""


class DimensionMismatch(SledError):
    """Two inputs that must agree on feature count do not."""


class DegenerateFeature(SledError):
    """A feature has zero variance, so correlations are undefined for it."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"feature {index} is constant (zero variance)")


class DegenerateVariance(SledError):
    """The max-entry statistic's variance normalizer vanished for some entry pair."""


class InstanceTooLarge(SledError):
    """Exact support enumeration was asked for an infeasibly large instance."""


class ParseError(SledError):
    """A matrix file failed to parse; carries the offending location."""

    def __init__(self, path, row: int | None = None, col: int | None = None,
                 message: str = "parse error"):
        self.path = str(path)
        self.row = row
        self.col = col
        where = self.path
        if row is not None:
            where += f", row {row}"
        if col is not None:
            where += f", column {col}"
        super().__init__(f"{message} ({where})")


class RaggedRows(ParseError):
    """Rows of a matrix file have inconsistent cell counts."""


class NonNumericCell(ParseError):
    """A matrix cell is not a finite real number."""
