"""Closed-loop simulation of a wheeled mobile robot with a PID velocity loop
and an online-learning neural feed-forward compensator."""

from wmrctl.errors import DomainError, NumericError, ParameterError, UsageError

__version__ = "0.1.0"

__all__ = ["DomainError", "NumericError", "ParameterError", "UsageError", "__version__"]
