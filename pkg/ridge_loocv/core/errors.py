from datetime import datetime
from typing import Any, Dict, Optional

from ridge_loocv.core.logging import get_logger

logger = get_logger(__name__)

EXIT_UNEXPECTED = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


class AppError(Exception):
    """Base application error."""
    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        exit_code: int = EXIT_UNEXPECTED,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.error_code = error_code or "INTERNAL_ERROR"
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(message)


class InvalidInputError(AppError):
    """A precondition on arguments does not hold."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="INVALID_INPUT",
            exit_code=EXIT_INPUT,
            details=details,
        )


class DatasetFormatError(AppError):
    """Dataset file could not be turned into a regression problem."""
    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        column: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        details = dict(details or {})
        if row is not None:
            details["row"] = row
        if column is not None:
            details["column"] = column
        super().__init__(
            message=message,
            error_code="DATASET_FORMAT",
            exit_code=EXIT_INPUT,
            details=details,
        )


class ConstantColumnError(AppError):
    """A covariate column has zero variance."""
    def __init__(self, column: int, name: Optional[str] = None):
        self.column = column
        super().__init__(
            message=f"Column {column} ({name or '?'}) is constant",
            error_code="CONSTANT_COLUMN",
            exit_code=EXIT_INPUT,
            details={"column": column, "name": name},
        )


class RankDeficientError(AppError):
    """Covariate matrix (or a leave-one-out subproblem) is rank deficient."""
    def __init__(self, message: str = "Covariate matrix is rank deficient",
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="RANK_DEFICIENT",
            exit_code=EXIT_NUMERICAL,
            details=details,
        )


class ZeroResponseError(AppError):
    """Response vector is identically zero."""
    def __init__(self):
        super().__init__(
            message="Response vector has zero norm",
            error_code="ZERO_RESPONSE",
            exit_code=EXIT_INPUT,
        )


class BadRankError(AppError):
    """PCR rank outside [1, D]."""
    def __init__(self, rank: int, dim: int):
        super().__init__(
            message=f"PCR rank {rank} outside [1, {dim}]",
            error_code="BAD_RANK",
            exit_code=EXIT_INPUT,
            details={"rank": rank, "dim": dim},
        )


class LeverageOneError(AppError):
    """Some point is interpolated (1 - Q_n ~ 0); LOOCV is undefined."""
    def __init__(self, index: int, lam: float, gap: float):
        self.index = index
        super().__init__(
            message=f"Point {index} has leverage one at lambda={lam:g}",
            error_code="LEVERAGE_ONE",
            exit_code=EXIT_NUMERICAL,
            details={"index": index, "lambda": lam, "one_minus_q": gap},
        )


class FlatSpectrumRequiredError(AppError):
    """Operation is only defined for the unit spectrum S = 1."""
    def __init__(self, max_deviation: float):
        super().__init__(
            message="Operation requires a flat unit spectrum",
            error_code="FLAT_SPECTRUM_REQUIRED",
            exit_code=EXIT_NUMERICAL,
            details={"max_deviation": max_deviation},
        )


class NoPositiveRootError(AppError):
    """Quadratic has no positive root."""
    def __init__(self, coefficients, reason: str = "no positive root"):
        super().__init__(
            message=f"Quadratic has {reason}",
            error_code="NO_POSITIVE_ROOT",
            exit_code=EXIT_NUMERICAL,
            details={"coefficients": [float(c) for c in coefficients], "reason": reason},
        )


class GridTooCoarseError(AppError):
    """Sign changes of L' cannot be separated on the lambda grid."""
    def __init__(self, points: int, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        details["points"] = points
        super().__init__(
            message=f"Lambda grid with {points} points is too coarse",
            error_code="GRID_TOO_COARSE",
            exit_code=EXIT_NUMERICAL,
            details=details,
        )


class DegenerateDrawError(AppError):
    """Random draw was numerically degenerate too many times."""
    def __init__(self, sampler: str, attempts: int):
        super().__init__(
            message=f"{sampler}: degenerate draw after {attempts} attempts",
            error_code="DEGENERATE_DRAW",
            exit_code=EXIT_NUMERICAL,
            details={"sampler": sampler, "attempts": attempts},
        )


class ExperimentConfigError(AppError):
    """Experiment configuration is invalid."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="EXPERIMENT_CONFIG",
            exit_code=EXIT_CONFIG,
            details=details,
        )


def error_payload(exc: Exception) -> Dict[str, Any]:
    """Render an exception as the error envelope written by the CLI."""
    if isinstance(exc, AppError):
        code, message, details = exc.error_code, exc.message, exc.details
    else:
        code, message, details = "INTERNAL_ERROR", str(exc), {"type": type(exc).__name__}

    error_data = {
        "error": {
            "code": code,
            "message": message,
            "details": details,
            "timestamp": datetime.now().isoformat(),
        }
    }

    logger.error(f"Application error: {code} - {message}", extra={"details": details})
    return error_data


def exit_code_for(exc: Exception) -> int:
    return exc.exit_code if isinstance(exc, AppError) else EXIT_UNEXPECTED
