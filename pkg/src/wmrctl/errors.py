"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter or configuration value is outside its valid range."""


class DomainError(ValueError):
    """An operation was evaluated outside the domain where it is defined."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value.

    ``index`` is the offending state component (or control tick, when raised
    by the simulation loop).
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UsageError(RuntimeError):
    """An API was called with inconsistent arguments (stale caches, mismatched runs)."""
