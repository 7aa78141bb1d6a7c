import json
import logging.handlers

import pytest
from pydantic import ValidationError

from ridge_loocv.core.config import Settings
from ridge_loocv.core.errors import (
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_NUMERICAL,
    EXIT_UNEXPECTED,
    ExperimentConfigError,
    GridTooCoarseError,
    InvalidInputError,
    LeverageOneError,
    error_payload,
    exit_code_for,
)
from ridge_loocv.core.logging import get_logger, setup_logging


def test_settings_defaults():
    """Test the documented defaults"""
    config = Settings()
    assert config.GRID_POINTS == 400
    assert config.STRICT_RISE_REL == 1e-9
    assert config.GRID_RETRIES == 2
    assert config.DENSE_ORACLE_POINTS == 100_000


def test_settings_from_environment(monkeypatch):
    """Test settings are read from the environment"""
    monkeypatch.setenv("GRID_POINTS", "800")
    monkeypatch.setenv("STRICT_RISE_REL", "1e-7")
    config = Settings()
    assert config.GRID_POINTS == 800
    assert config.STRICT_RISE_REL == 1e-7


@pytest.mark.parametrize("field, value", [("GRID_POINTS", 2), ("ROOT_RTOL", 0.0), ("THREADS", 0)])
def test_settings_validation(field, value):
    """Test invalid settings are rejected"""
    with pytest.raises(ValidationError):
        Settings(**{field: value})


def test_error_payload_for_app_error():
    """Test the error envelope carries code, message and details"""
    exc = LeverageOneError(3, 0.5, 1e-14)
    payload = error_payload(exc)

    assert payload["error"]["code"] == "LEVERAGE_ONE"
    assert payload["error"]["details"]["index"] == 3
    assert "timestamp" in payload["error"]
    assert exit_code_for(exc) == EXIT_NUMERICAL


def test_error_payload_for_unexpected_error():
    """Test unexpected exceptions map to INTERNAL_ERROR and exit 1"""
    exc = ZeroDivisionError("division by zero")
    payload = error_payload(exc)
    assert payload["error"]["code"] == "INTERNAL_ERROR"
    assert payload["error"]["details"]["type"] == "ZeroDivisionError"
    assert exit_code_for(exc) == EXIT_UNEXPECTED


def test_exit_codes_by_category():
    """Test each error family has its exit code"""
    assert InvalidInputError("bad").exit_code == EXIT_INPUT
    assert GridTooCoarseError(10).exit_code == EXIT_NUMERICAL
    assert ExperimentConfigError("bad").exit_code == EXIT_CONFIG
    assert GridTooCoarseError(10, {"lambda": 1.0}).details == {"lambda": 1.0, "points": 10}


def test_json_log_file(tmp_path):
    """Test file logging writes one JSON object per line"""
    log_file = tmp_path / "logs" / "run.log"
    root = setup_logging(level="INFO", log_file=str(log_file), json_format=True)
    try:
        get_logger("ridge_loocv.test").info("grid densified")
    finally:
        for handler in list(root.handlers):
            if isinstance(handler, logging.handlers.RotatingFileHandler):
                handler.close()
                root.removeHandler(handler)

    record = json.loads(log_file.read_text().strip().splitlines()[-1])
    assert record["message"] == "grid densified"
    assert record["levelname"] == "INFO"
    assert record["name"] == "ridge_loocv.test"
