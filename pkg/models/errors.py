"""Exception hierarchy shared by every service.

Each error carries an ErrorCode, a message, optional details and, for
configuration problems, the dotted field path that failed validation.
"""
from typing import Any, Dict, Optional

from models.responses import ErrorCode, ErrorResponse


class LabError(Exception):
    """Base class for all lab failures."""

    default_code = ErrorCode.INTERNAL_ERROR
    exit_code = 3

    def __init__(
        self,
        message: str,
        code: Optional[ErrorCode] = None,
        details: Optional[Dict[str, Any]] = None,
        field: Optional[str] = None,
    ):
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.details = details or {}
        self.field = field

    def to_response(self) -> ErrorResponse:
        return ErrorResponse(
            code=self.code.value,
            message=self.message,
            details=self.details or None,
            field=self.field,
        )


class ConfigError(LabError):
    default_code = ErrorCode.CONFIG_INVALID
    exit_code = 2


class ExpressionError(LabError):
    """Parse or evaluation failure in the expression language."""
    default_code = ErrorCode.EXPR_SYNTAX
    exit_code = 2

    def __init__(self, message: str, code: Optional[ErrorCode] = None, offset: Optional[int] = None, **kwargs):
        details = kwargs.pop("details", None) or {}
        if offset is not None:
            details["offset"] = offset
        super().__init__(message, code=code, details=details, **kwargs)
        self.offset = offset


class NumericalError(LabError):
    default_code = ErrorCode.INTERNAL_ERROR
    exit_code = 3


class JetError(NumericalError):
    default_code = ErrorCode.JET_BASE_MISMATCH


class NewtonError(NumericalError):
    default_code = ErrorCode.MAP_NEWTON_FAILED


class ContinuationError(NumericalError):
    default_code = ErrorCode.MAP_CONTINUATION_FAILED


class SplittingError(NumericalError):
    default_code = ErrorCode.SPLIT_NOT_CONVERGED


class CertificationRefused(NumericalError):
    default_code = ErrorCode.SPLIT_CERTIFICATION_REFUSED


class DegenerateFitError(NumericalError):
    default_code = ErrorCode.SPLIT_DEGENERATE_FIT


class LeafError(NumericalError):
    default_code = ErrorCode.NF_LEAF_FAILED


class ChartError(NumericalError):
    default_code = ErrorCode.NF_CHART_FAILED


class TemplateError(NumericalError):
    """Slope overflow: the plane is within tolerance of vertical."""
    default_code = ErrorCode.NF_SLOPE_OVERFLOW


class GridError(NumericalError):
    default_code = ErrorCode.NF_GRID_MISALIGNED


class SeriesRefused(NumericalError):
    default_code = ErrorCode.NF_SERIES_REFUSED


class DegenerateFormError(NumericalError):
    default_code = ErrorCode.CON_DEGENERATE_FORM


class PreconditionError(NumericalError):
    default_code = ErrorCode.CON_PRECONDITION


class TransversalityError(NumericalError):
    default_code = ErrorCode.CON_TRANSVERSALITY
