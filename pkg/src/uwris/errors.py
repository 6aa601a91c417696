"""Exception types shared across the toolkit."""


class UwrisError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(UwrisError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class DimensionError(UwrisError, ValueError):
    """Array arguments have inconsistent shapes."""


class DegenerateGeometryError(UwrisError):
    """Node placement makes a computation singular (coincident nodes,
    coincident path delays, ...)."""

    def __init__(self, message: str, en_index: int | None = None):
        super().__init__(message)
        self.en_index = en_index


class SearchFailureError(UwrisError):
    """A grid search had no evaluable points."""


class InfeasibleError(UwrisError):
    """A subproblem has an empty feasible set; names the binding constraint."""

    def __init__(self, message: str, constraint: str | None = None):
        super().__init__(message)
        self.constraint = constraint


class MonotonicityError(UwrisError, AssertionError):
    """The optimizer's merit history decreased beyond tolerance."""


class ConfigError(UwrisError):
    """A configuration file could not be parsed or validated."""
