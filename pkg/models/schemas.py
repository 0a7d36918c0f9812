"""Pydantic models for reports and stored runs."""
import math
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

REPORT_SCHEMA_VERSION = "1.0"

Cell = Union[float, int, str, None]


class CheckResult(BaseModel):
    """Outcome of one acceptance check.

    kind selects the comparison:
    - "max": measured <= upper
    - "min": measured >= lower
    - "range": lower <= measured <= upper
    - "flag": passed is given directly (measured is informative only)

    A check that raised carries error_code and message and never passes.
    """
    name: str = Field(..., description="Check identifier, e.g. contact.pullback")
    kind: Literal["max", "min", "range", "flag"] = Field("max", description="Comparison against the tolerance")
    measured: Optional[float] = Field(None, description="Measured value")
    lower: Optional[float] = Field(None, description="Lower bound for min/range checks")
    upper: Optional[float] = Field(None, description="Upper bound (tolerance) for max/range checks")
    passed: bool = Field(False, description="Whether the measured value satisfies the bound")
    error_code: Optional[str] = Field(None, description="Error code when the check raised")
    message: Optional[str] = Field(None, description="Error message or note")

    @model_validator(mode="after")
    def decide(self):
        if self.error_code is not None or self.kind == "flag":
            if self.error_code is not None:
                self.passed = False
            return self
        value = self.measured
        if value is None or not math.isfinite(value):
            self.passed = False
        elif self.kind == "max":
            self.passed = value <= self.upper
        elif self.kind == "min":
            self.passed = value >= self.lower
        else:
            self.passed = self.lower <= value <= self.upper
        return self

    @property
    def tolerance(self) -> Optional[float]:
        return self.lower if self.kind == "min" else self.upper

    @classmethod
    def at_most(cls, name: str, measured: float, upper: float) -> "CheckResult":
        return cls(name=name, kind="max", measured=float(measured), upper=float(upper))

    @classmethod
    def at_least(cls, name: str, measured: float, lower: float) -> "CheckResult":
        return cls(name=name, kind="min", measured=float(measured), lower=float(lower))

    @classmethod
    def within(cls, name: str, measured: float, lower: float, upper: float) -> "CheckResult":
        return cls(name=name, kind="range", measured=float(measured), lower=float(lower), upper=float(upper))

    @classmethod
    def flag(cls, name: str, passed: bool, measured: Optional[float] = None, message: Optional[str] = None) -> "CheckResult":
        return cls(name=name, kind="flag", measured=measured, passed=bool(passed), message=message)

    @classmethod
    def failed(cls, name: str, code: str, message: str) -> "CheckResult":
        return cls(name=name, kind="flag", passed=False, error_code=code, message=message)

    class Config:
        json_schema_extra = {
            "example": {
                "name": "contact.pullback",
                "kind": "max",
                "measured": 3.1e-16,
                "upper": 1e-10,
                "passed": True,
            }
        }


class ResultTable(BaseModel):
    """Rows of one result table; written as its own CSV file in csv format."""
    name: str = Field(..., description="Table name, used as the CSV file stem")
    columns: List[str] = Field(..., description="Column headers")
    rows: List[List[Cell]] = Field(default_factory=list, description="Table rows")

    @model_validator(mode="after")
    def rows_match_columns(self):
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(f"row {i} of table {self.name} has {len(row)} cells, expected {len(self.columns)}")
        return self


class Report(BaseModel):
    """Deterministic result of one experiment run.

    Wall-clock time is kept out of the report; it goes to timing.json and
    the run store so repeated runs with the same config and seed produce
    identical report files.
    """
    schema_version: str = Field(REPORT_SCHEMA_VERSION, description="Report schema version")
    experiment_id: str = Field(..., description="Experiment identifier")
    pipeline: str = Field(..., description="Pipeline that produced the report")
    map: Dict[str, Any] = Field(..., description="Description of the map under study")
    seed: int = Field(..., description="Seed of every keyed random stream")
    config: Dict[str, Any] = Field(..., description="Echo of the validated configuration")
    checks: List[CheckResult] = Field(default_factory=list, description="Acceptance checks")
    tables: List[ResultTable] = Field(default_factory=list, description="Result tables")
    summary: Dict[str, Any] = Field(default_factory=dict, description="Residual summaries")
    passed: bool = Field(False, description="Whether every check passed")

    @model_validator(mode="after")
    def overall(self):
        self.passed = bool(self.checks) and all(c.passed for c in self.checks)
        return self

    def failed_checks(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def numerical_failure(self) -> bool:
        """True when some check raised a numerical error rather than missing its bound."""
        return any(c.error_code is not None and not c.error_code.startswith("CFG_") for c in self.checks)


class CheckSummary(BaseModel):
    name: str
    measured: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool
    error_code: Optional[str] = None

    class Config:
        from_attributes = True


class RunSummary(BaseModel):
    """One row of the run store, as listed by the runs command."""
    id: int
    experiment_id: str
    pipeline: str
    map_name: str
    seed: int
    passed: bool
    report_path: Optional[str] = None
    started_at: datetime
    wall_clock_seconds: Optional[float] = None
    checks: List[CheckSummary] = Field(default_factory=list)

    class Config:
        from_attributes = True
