"""Custom exceptions for the impulse stabilization toolkit."""

from typing import Any


class StabilizationError(Exception):
    """Base exception for all toolkit errors."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        """Initialize a toolkit error.

        Args:
            message: Error message
            details: Diagnostics attached to the failure, if any
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}


class DimensionMismatchError(StabilizationError):
    """Matrix or vector shapes are inconsistent."""

    def __init__(self, what: str, expected: Any, actual: Any):
        super().__init__(
            f"Dimension mismatch in {what}: expected {expected}, got {actual}",
            details={"what": what, "expected": str(expected), "actual": str(actual)},
        )
        self.what = what


class InvalidParameterError(StabilizationError):
    """A scalar parameter lies outside its admissible range."""

    def __init__(self, name: str, value: Any, expected: str):
        super().__init__(
            f"Invalid value for {name}: {value!r} (expected {expected})",
            details={"name": name, "value": str(value)},
        )
        self.name = name


class ScheduleError(StabilizationError):
    """Impulse instants or control intervals are malformed."""


class WeightsError(StabilizationError):
    """Cost weights violate their positivity margins or corrupt an inner solve."""


class NumericalError(StabilizationError):
    """NaN or overflow encountered during an iteration."""


class ConvergenceError(StabilizationError):
    """Iteration budget exhausted without a verdict."""


class SteeringError(StabilizationError):
    """Steering functional is not coercive or its minimization stalled."""


class ContractionViolatedError(StabilizationError):
    """A concatenation block failed to contract the state."""

    def __init__(self, block: int, ratio: float):
        super().__init__(
            f"steering contraction violated at block {block}: ratio {ratio:.6g} >= 1",
            details={"block": block, "ratio": ratio},
        )
        self.block = block
        self.ratio = ratio


class ConfigurationError(StabilizationError):
    """Run configuration could not be parsed or validated."""


class VerdictDisagreementError(StabilizationError):
    """Independent stabilizability verdicts disagree."""
