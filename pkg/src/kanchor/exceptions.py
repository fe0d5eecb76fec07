"""Error types raised across the package."""


class InvalidInputError(ValueError):
    """Shapes, sizes or values that violate an operation's preconditions."""


class DegenerateBandwidthError(InvalidInputError):
    """Median heuristic over points that are all identical."""


class IllConditionedError(ArithmeticError):
    """A regularized system stayed singular after jitter escalation."""


class MissingColumnError(KeyError):
    """A schema references a column absent from the CSV header."""


class EmptyDatasetError(InvalidInputError):
    """No rows survived ingestion or filtering."""


class SemSpecParseError(ValueError):
    """Malformed structural-equation JSON; message carries the failing field."""
