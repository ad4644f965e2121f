"""Exception types shared across ohsize.

Every error carries a machine-readable ``kind`` and the CLI ``exit_code``:
2 for user or domain errors, 3 for internal numerical failures.
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional


class OHSError(RuntimeError):
    """Base class for ohsize failures."""

    kind = "internal"
    exit_code = 3


class DomainError(OHSError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""

    kind = "domain"
    exit_code = 2


class InsufficientDataError(OHSError):
    """Raised when too few distinct observations are available."""

    kind = "insufficient_data"
    exit_code = 2


class NoInteriorOHSError(OHSError):
    """Raised when the cost has no minimum strictly inside (0, N)."""

    kind = "no_interior_ohs"
    exit_code = 2

    def __init__(self, diagnosis: str) -> None:
        super().__init__(diagnosis)
        self.diagnosis = diagnosis


class UnsupportedOperationError(OHSError):
    kind = "unsupported"
    exit_code = 2


class InputFormatError(OHSError):
    """Raised for malformed input files; ``line`` is 1-based when known."""

    kind = "input_format"
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FitFailureError(OHSError):
    """Raised when the power-law fit does not converge from any start."""

    kind = "fit_failure"

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CovarianceInvalidError(OHSError):
    kind = "covariance_invalid"


class CIUndefinedError(OHSError):
    """Raised when too many bootstrap replicates have no interior OHS."""

    kind = "ci_undefined"

    def __init__(self, message: str, degenerate_fraction: float) -> None:
        super().__init__(message)
        self.degenerate_fraction = degenerate_fraction


class ConditioningError(OHSError):
    kind = "conditioning"


class CalibrationError(OHSError):
    """Raised when the synthetic cohort cannot meet its calibration targets."""

    kind = "calibration"

    def __init__(self, message: str, achieved: Optional[Dict[str, float]] = None) -> None:
        super().__init__(message)
        self.achieved = achieved or {}


class AlgorithmFailure(OHSError):
    """Raised when an acquisition loop cannot produce a final estimate."""

    kind = "algorithm_failure"

    def __init__(self, message: str, trace: Optional[List[Dict[str, Any]]] = None) -> None:
        super().__init__(message)
        self.trace = trace or []


class OracleError(OHSError):
    kind = "oracle"


class OracleQuotaExceeded(OracleError):
    """Raised when an oracle client has used up its call quota."""
