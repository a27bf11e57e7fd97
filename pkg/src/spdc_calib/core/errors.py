"""Typed exceptions with structured info for reports and the CLI."""

from typing import Any


class CalibrationError(Exception):
    """Base error with structured info.

    All errors include:
    - message: Human-readable error description
    - details: Dict with context (element path, offending values, etc.)
    - suggestion: Actionable fix suggestion
    """

    exit_code = 1

    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
        suggestion: str = "",
    ) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}
        self.suggestion = suggestion

    def to_dict(self) -> dict[str, Any]:
        """Serialize error for report output."""
        return {
            "type": self.__class__.__name__,
            "message": self.message,
            "details": self.details,
            "suggestion": self.suggestion,
        }


class InvalidArgumentError(CalibrationError, ValueError):
    """Operation precondition violated (negative rate, unsorted stream, zero denominator)."""

    pass


class ConfigError(CalibrationError):
    """Scenario does not validate. details["path"] names the offending element."""

    exit_code = 2


class OutOfRegimeError(CalibrationError):
    """First-order correction used outside its validity range."""

    exit_code = 3


class DegenerateFitError(CalibrationError):
    """Least-squares problem has singular normal equations."""

    exit_code = 4


class ValidationFailedError(CalibrationError):
    """Run completed but a validation invariant did not hold."""

    exit_code = 5
