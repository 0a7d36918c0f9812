"""Standardized result envelopes and error codes for lab output."""
from pydantic import BaseModel, Field
from typing import Optional, Any, Dict
from enum import Enum


class ErrorCode(str, Enum):
    """Stable error codes surfaced in reports and CLI output."""
    # Configuration (exit code 2)
    CONFIG_INVALID = "CFG_001"
    CONFIG_MISSING_FIELD = "CFG_002"
    CONFIG_UNKNOWN_NAME = "CFG_003"
    CONFIG_FILE_NOT_FOUND = "CFG_004"

    # Expression language
    EXPR_SYNTAX = "EXP_001"
    EXPR_UNKNOWN_IDENTIFIER = "EXP_002"
    EXPR_UNBOUND_PARAMETER = "EXP_003"
    EXPR_DIVISION_BY_ZERO = "EXP_004"
    EXPR_NONFINITE = "EXP_005"

    # Jets
    JET_ORDER_MISMATCH = "JET_001"
    JET_BASE_MISMATCH = "JET_002"
    JET_SINGULAR = "JET_003"

    # Geometry and maps
    GEO_MANIFOLD_MISMATCH = "GEO_001"
    MAP_NEWTON_FAILED = "MAP_001"
    MAP_CONTINUATION_FAILED = "MAP_002"
    MAP_NO_BASE = "MAP_003"

    # Splitting
    SPLIT_NOT_CONVERGED = "SPL_001"
    SPLIT_CERTIFICATION_REFUSED = "SPL_002"
    SPLIT_DEGENERATE_FIT = "SPL_003"

    # Normal forms
    NF_LEAF_FAILED = "NF_001"
    NF_CHART_FAILED = "NF_002"
    NF_SLOPE_OVERFLOW = "NF_003"
    NF_GRID_MISALIGNED = "NF_004"
    NF_SERIES_REFUSED = "NF_005"

    # Cocycles
    COC_NO_ORBITS = "COC_001"

    # Contact diagnostics
    CON_DEGENERATE_FORM = "CON_001"
    CON_PRECONDITION = "CON_002"
    CON_TRANSVERSALITY = "CON_003"

    # Lab runner
    LAB_CHECK_FAILED = "LAB_001"

    # Internal (exit code 3 when numerical)
    INTERNAL_ERROR = "SRV_001"
    DATABASE_ERROR = "SRV_002"


class ErrorResponse(BaseModel):
    """Serialized error payload."""
    code: str = Field(..., description="Error code (e.g., SPL_001)")
    message: str = Field(..., description="Human-readable error message")
    details: Optional[Dict[str, Any]] = Field(None, description="Additional error details")
    field: Optional[str] = Field(None, description="Dotted config path if configuration error")


class StandardResponse(BaseModel):
    """Envelope printed by the CLI in JSON mode."""
    success: bool = Field(..., description="Whether every check passed")
    message: Optional[str] = Field(None, description="Human-readable message")
    data: Optional[Any] = Field(None, description="Payload (if successful)")
    error: Optional[ErrorResponse] = Field(None, description="Error details (if unsuccessful)")
    version: str = Field(default="1.0", description="Report schema version")


def success_response(data: Any = None, message: str = "Success") -> StandardResponse:
    """Create a success envelope."""
    return StandardResponse(success=True, message=message, data=data, error=None)


def error_response(
    code: ErrorCode,
    message: str,
    details: Optional[Dict[str, Any]] = None,
    field: Optional[str] = None,
) -> StandardResponse:
    """Create an error envelope."""
    return StandardResponse(
        success=False,
        message=message,
        data=None,
        error=ErrorResponse(
            code=code.value if isinstance(code, ErrorCode) else str(code),
            message=message,
            details=details,
            field=field,
        ),
    )
