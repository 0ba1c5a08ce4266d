"""Errors raised by the library."""

from __future__ import annotations

from typing import Any


class NetfexError(Exception):
    """Base class for every library error."""


class ParameterError(NetfexError, ValueError):
    """An argument or configuration value is outside its valid range."""


class PreconditionError(NetfexError):
    """The input does not satisfy a structural precondition (e.g. connectivity)."""


class RetriesExhaustedError(NetfexError):
    """A randomized construction could not meet its constraints."""


class TooShortError(NetfexError):
    """A time series has fewer samples than the operation requires."""


class UndefinedMetricError(NetfexError):
    """A metric is undefined for the given inputs."""


class NumericError(NetfexError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class ExpressionOverflowError(NumericError):
    """An expression-tree node produced a non-finite or oversized value."""

    def __init__(self, node_index: int, message: str | None = None) -> None:
        self.node_index = node_index
        super().__init__(message or f"Expression node {node_index} overflowed")


class BlowUpError(NumericError):
    """A trajectory left the overflow guard during integration."""

    def __init__(self, step: int, partial: Any = None) -> None:
        self.step = step
        self.partial = partial
        super().__init__(f"Integration blew up at step {step}")
