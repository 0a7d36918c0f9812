"""Experiment configuration: an INI file validated by pydantic.

Grammar (all sections optional except [experiment].seed):

    [experiment]  id, pipeline, seed, samples, workers, output_dir, format
    [map]         name | (manifold, x, y, z, inverse_x/y/z, base_x, base_y,
                  volume_preserving, family_parameter)
    [params]      name = real
    [form]        a, b, c          contact form a dx + b dy + c dz
    [tolerances]  see Tolerances
    [splitting]   see SplittingSettings
    [normalform]  see NormalFormSettings
    [contact]     see ContactSettings
    [heisenberg]  see HeisenbergSettings

Lists are comma separated. PHLAB_OUTPUT_DIR overrides output_dir; command
line flags override both.
"""
import configparser
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from models.errors import ConfigError, LabError
from models.responses import ErrorCode
from services.geometry import OneForm, manifold_for
from services.maps import BUILTINS, MapSpec, builtin_map

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "PHLAB_OUTPUT_DIR"
PIPELINES = ("verify", "exponents", "regularity", "templates", "fh", "contact", "sugap", "heisenberg")
Pipeline = Literal["verify", "exponents", "regularity", "templates", "fh", "contact", "sugap", "heisenberg"]


def _float_list(value):
    if isinstance(value, str):
        return [float(v) for v in value.split(",") if v.strip()]
    return value


class ExperimentSection(BaseModel):
    id: Optional[str] = Field(None, description="Experiment identifier; defaults to <pipeline>-<map>-s<seed>")
    pipeline: Pipeline = Field("verify", description="Pipeline to run")
    seed: int = Field(..., ge=0, description="Seed of every keyed random stream")
    samples: int = Field(1000, ge=1, description="Random sample points per check")
    workers: int = Field(1, ge=1, description="Worker threads for per-sample work")
    output_dir: str = Field("results", description="Directory for reports and runs.db")
    format: Literal["json", "csv"] = Field("json", description="Report format")


class MapSection(BaseModel):
    name: Optional[str] = Field("cat3", description="Built-in map name; leave empty for a custom map")
    manifold: Literal["torus3", "heisenberg"] = Field("torus3", description="Quotient of a custom map")
    x: Optional[str] = None
    y: Optional[str] = None
    z: Optional[str] = None
    inverse_x: Optional[str] = None
    inverse_y: Optional[str] = None
    inverse_z: Optional[str] = None
    base_x: Optional[str] = None
    base_y: Optional[str] = None
    volume_preserving: bool = False
    family_parameter: Optional[str] = None

    @field_validator("name")
    @classmethod
    def known_builtin(cls, value):
        if value and value not in BUILTINS:
            raise ValueError(f"unknown built-in map {value!r}; expected one of {sorted(BUILTINS)}")
        return value or None

    @model_validator(mode="after")
    def components_for_custom_maps(self):
        if self.name is None:
            for axis in ("x", "y", "z"):
                if not getattr(self, axis):
                    raise ValueError(f"custom map needs the component {axis!r}")
            inverse = [self.inverse_x, self.inverse_y, self.inverse_z]
            if any(inverse) and not all(inverse):
                raise ValueError("inverse needs all of inverse_x, inverse_y, inverse_z")
            if bool(self.base_x) != bool(self.base_y):
                raise ValueError("base needs both base_x and base_y")
        return self


class FormSection(BaseModel):
    a: str = "0"
    b: str = "0"
    c: str = "0"


class Tolerances(BaseModel):
    contact: float = Field(1e-10, gt=0, description="max |F* alpha - alpha|")
    volume: float = Field(1e-12, gt=0, description="max |det Df - 1|")
    lyapunov: float = Field(1e-6, gt=0, description="exponent error against the known value")
    exponent_sum: float = Field(2e-6, gt=0, description="|chi_s + chi_c + chi_u| for conservative maps")
    invariance: float = Field(1e-8, gt=0, description="splitting Df-invariance angle")
    template_slope: float = Field(2.5, gt=0, description="minimal log-log slope of the template residual")
    template_floor: float = Field(1e-7, gt=0, description="template residual noise floor")
    series: float = Field(1e-4, gt=0, description="series against template sup difference")
    obstruction: float = Field(1e-6, gt=0, description="periodic FH obstruction")
    chart_change: float = Field(1e-6, gt=0, description="chart-change identity residual")
    rho: float = Field(1e-12, gt=0, description="|rho - 1| and pullback residual")
    hrho: float = Field(1e-10, gt=0, description="h o f - rho^2 h")
    reeb: float = Field(1e-6, gt=0, description="angle between Reeb field and E^c")
    gap: float = Field(1e-8, gt=0, description="su gap of integrable maps")
    rotation: float = Field(1e-6, gt=0, description="R'(0) against the closed form")
    livshits: float = Field(1e-10, gt=0, description="periodic log-det sums per period")
    structure: float = Field(1e-9, gt=0, description="deck commutation, inverse round trip, form deck compatibility")
    center: float = Field(1e-8, gt=0, description="|chi_c| for maps with a declared contact form")
    additivity: float = Field(1e-8, gt=0, description="relative defect of finite-time exponent additivity")
    twist: float = Field(1e-8, gt=0, description="relative defect of the FH twist product")
    reeb_solver: float = Field(1e-12, gt=0, description="alpha(R) - 1 and i_R d alpha")
    periodicity: float = Field(1e-14, gt=0, description="period-2 defect of the Heisenberg base point")
    rotation_zero: float = Field(1e-12, gt=0, description="|R(0) - 1/2|")
    fiber: float = Field(1e-12, gt=0, description="spread of the fiber return")
    slope_low: float = Field(1.8, description="lower bound of quadratic log-log slopes")
    slope_high: float = Field(2.2, description="upper bound of quadratic log-log slopes")
    lipschitz_factor: float = Field(2.0, gt=1, description="allowed factor between estimated and analytic Lipschitz constants")
    constant_field: float = Field(1e-8, gt=0, description="Lipschitz constant of a constant plane field")
    leaf: float = Field(1e-7, gt=0, description="leaf conjugacy f(Phi_x(xi)) - Phi_fx(lambda xi)")


class SplittingSettings(BaseModel):
    iterations: int = Field(40, ge=1)
    angle_tolerance: float = Field(1e-10, gt=0)
    lyapunov_steps: int = Field(10000, ge=1000)
    renorm_every: int = Field(1, ge=1)
    window: int = Field(100, ge=1)
    k_max: int = Field(5, ge=1)
    bunching_r: float = Field(1.0, gt=0)
    regularity_pairs: int = Field(2000, ge=3)


class NormalFormSettings(BaseModel):
    surface: Literal["su", "us"] = "su"
    leaf_depth: int = Field(30, ge=2)
    center_bend: Optional[str] = None
    alternate_surface: Literal["su", "us"] = "us"
    alternate_bend: Optional[str] = "0.1*sin(2*pi*x)*cos(2*pi*y)"
    grid_radius: float = Field(0.05, gt=0, le=0.3)
    grid_points: int = Field(9, ge=3)
    series_terms: int = Field(20, ge=0)
    max_period: int = Field(6, ge=1)
    points: int = Field(3, ge=1, description="base points for chart and template checks")
    obstruction_period: int = Field(2, ge=1)
    fit_steps: int = Field(200, ge=10)


class ContactSettings(BaseModel):
    sizes: List[float] = Field(default_factory=lambda: [0.003, 0.006, 0.012, 0.024, 0.03])
    base_point: List[float] = Field(default_factory=lambda: [0.3, 0.6, 0.2])

    @field_validator("sizes", "base_point", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _float_list(value)

    @field_validator("base_point")
    @classmethod
    def three_coordinates(cls, value):
        if len(value) != 3:
            raise ValueError("base_point needs three coordinates")
        return value


class HeisenbergSettings(BaseModel):
    step: float = Field(1e-4, ge=1e-6, le=1e-3)
    richardson_steps: List[float] = Field(default_factory=lambda: [1e-4, 2e-4, 4e-4])
    eps_grid: List[float] = Field(default_factory=lambda: [-1e-3, -5e-4, 0.0, 5e-4, 1e-3])
    defect_eps: List[float] = Field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])

    @field_validator("richardson_steps", "eps_grid", "defect_eps", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _float_list(value)


class ExperimentConfig(BaseModel):
    """Validated configuration of one experiment run."""
    experiment: ExperimentSection
    map: MapSection = Field(default_factory=MapSection)
    params: Dict[str, float] = Field(default_factory=dict)
    form: Optional[FormSection] = None
    tolerances: Tolerances = Field(default_factory=Tolerances)
    splitting: SplittingSettings = Field(default_factory=SplittingSettings)
    normalform: NormalFormSettings = Field(default_factory=NormalFormSettings)
    contact: ContactSettings = Field(default_factory=ContactSettings)
    heisenberg: HeisenbergSettings = Field(default_factory=HeisenbergSettings)

    class Config:
        json_schema_extra = {
            "example": {
                "experiment": {"id": "cat3-verify", "pipeline": "verify", "seed": 7, "samples": 100},
                "map": {"name": "cat3"},
            }
        }

    @model_validator(mode="after")
    def default_id(self):
        if not self.experiment.id:
            map_name = "F" if self.experiment.pipeline == "heisenberg" else self.map.name or "custom"
            self.experiment.id = f"{self.experiment.pipeline}-{map_name}-s{self.experiment.seed}"
        return self

    def map_spec(self) -> MapSpec:
        """Resolve the [map], [params] and [form] sections into a MapSpec."""
        try:
            if self.map.name:
                spec = builtin_map(self.map.name, self.params)
            else:
                m = self.map
                inverse = (m.inverse_x, m.inverse_y, m.inverse_z) if m.inverse_x else None
                base = (m.base_x, m.base_y) if m.base_x else None
                spec = MapSpec.from_strings(
                    "custom",
                    manifold_for(m.manifold),
                    (m.x, m.y, m.z),
                    self.params,
                    inverse=inverse,
                    base=base,
                    volume_preserving=m.volume_preserving,
                    family_parameter=m.family_parameter,
                )
            if self.form is not None:
                spec = replace(spec, contact_form=OneForm.from_strings(self.form.a, self.form.b, self.form.c, self.params))
        except ConfigError:
            raise
        except LabError as exc:
            raise ConfigError(exc.message, code=exc.code, details=exc.details, field=exc.field or "map") from exc
        return spec


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"])


def validate_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """ExperimentConfig from nested section dicts; the first failure becomes a ConfigError with its field path."""
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = _field_path(first)
        code = ErrorCode.CONFIG_MISSING_FIELD if first["type"] == "missing" else ErrorCode.CONFIG_INVALID
        raise ConfigError(f"{path}: {first['msg']}", code=code, field=path) from None


def read_sections(path) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found", code=ErrorCode.CONFIG_FILE_NOT_FOUND, field="config")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", field="config") from None
    return {section: dict(parser.items(section)) for section in parser.sections()}


def load_config(path=None, overrides: Optional[Mapping[str, Mapping[str, Any]]] = None) -> ExperimentConfig:
    """Merge file values, the output directory override from the environment, and command-line overrides."""
    raw: Dict[str, Dict[str, Any]] = read_sections(path) if path else {}
    if os.getenv(OUTPUT_DIR_ENV):
        raw.setdefault("experiment", {})["output_dir"] = os.environ[OUTPUT_DIR_ENV]
    for section, values in (overrides or {}).items():
        for key, value in values.items():
            if value is not None:
                raw.setdefault(section, {})[key] = value
    raw.setdefault("experiment", {})
    config = validate_config(raw)
    logger.debug(f"config {config.experiment.id}: pipeline {config.experiment.pipeline}, map {config.map.name or 'custom'}")
    return config
