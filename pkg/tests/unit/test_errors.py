"""Unit tests for error classes."""

import pytest

from spdc_calib.core.errors import (
    CalibrationError,
    ConfigError,
    DegenerateFitError,
    InvalidArgumentError,
    OutOfRegimeError,
    ValidationFailedError,
)


class TestCalibrationError:
    """Tests for base CalibrationError class."""

    def test_basic_creation(self) -> None:
        """Error can be created with just a message."""
        err = CalibrationError("Something went wrong")
        assert err.message == "Something went wrong"
        assert err.details == {}
        assert err.suggestion == ""

    def test_with_details(self) -> None:
        """Error can include details dict."""
        err = CalibrationError("Bad rate", details={"rate": -1.0, "gate": 10})
        assert err.details == {"rate": -1.0, "gate": 10}

    def test_with_suggestion(self) -> None:
        """Error can include actionable suggestion."""
        err = CalibrationError("Saturated", suggestion="Lower the count rate")
        assert err.suggestion == "Lower the count rate"

    def test_to_dict_serialization(self) -> None:
        """to_dict() returns the structured error written by the CLI."""
        err = CalibrationError("Test error", details={"key": "value"}, suggestion="Try this fix")
        result = err.to_dict()

        assert result["type"] == "CalibrationError"
        assert result["message"] == "Test error"
        assert result["details"] == {"key": "value"}
        assert result["suggestion"] == "Try this fix"

    def test_inherits_from_exception(self) -> None:
        """CalibrationError is a proper Exception."""
        err = CalibrationError("Test")
        assert isinstance(err, Exception)
        assert str(err) == "Test"


class TestErrorSubclasses:
    """Tests for the specialised error classes."""

    def test_invalid_argument_is_value_error(self) -> None:
        """InvalidArgumentError can be caught as ValueError."""
        with pytest.raises(ValueError):
            raise InvalidArgumentError("negative rate")

    def test_subclass_type_in_to_dict(self) -> None:
        """to_dict() names the concrete subclass."""
        err = ConfigError("bad key", details={"path": "source.pair_rat"})
        assert err.to_dict()["type"] == "ConfigError"
        assert err.to_dict()["details"]["path"] == "source.pair_rat"

    @pytest.mark.parametrize(
        ("error_class", "code"),
        [
            (CalibrationError, 1),
            (InvalidArgumentError, 1),
            (ConfigError, 2),
            (OutOfRegimeError, 3),
            (DegenerateFitError, 4),
            (ValidationFailedError, 5),
        ],
    )
    def test_exit_codes(self, error_class: type[CalibrationError], code: int) -> None:
        """Every error class maps to its documented CLI exit code."""
        assert error_class("x").exit_code == code

    def test_all_catchable_as_base(self) -> None:
        """Every subclass is caught by the base class."""
        for error_class in (
            InvalidArgumentError,
            ConfigError,
            OutOfRegimeError,
            DegenerateFitError,
            ValidationFailedError,
        ):
            with pytest.raises(CalibrationError):
                raise error_class("boom")
