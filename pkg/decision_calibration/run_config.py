"""
Run configuration for the evaluation passes and the synthetic generator.

Configs are flat YAML files; values may be scalars or lists (a list is a sweep,
cross-producted at run time). Relative paths resolve against the config file.
Defaults for threads, output directory and log level come from the environment
(DECAL_THREADS, DECAL_OUTPUT_DIR, DECAL_LOG_LEVEL; a .env file is honoured).
"""
import hashlib
import itertools
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional

import orjson
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from rich.logging import RichHandler

from .errors import ConfigError, IoError, ParamError
from .grid_store import GridSpec, Variable
from .synthetic_bench import ForecasterSpec, SyntheticDGP
from .tasks import DEFAULT_STANDBY_COST, DecisionTask, WindTransformParams, build_task

load_dotenv()

# --- CONFIGURATION ---
DEFAULT_LEADS_DAYS = [1, 3, 5, 7, 10, 15]
MAX_LEAD_DAYS = 15
RESULT_INVARIANT_KEYS = {"threads", "output_dir", "format"}
INPUT_KEYS = {"ensemble", "observations", "mask", "seed"}
PATH_KEYS = ("ensemble", "observations", "mask", "output_dir")
TASK_VARIABLES = {
    "frost": Variable.TEMPERATURE_2M,
    "heat": Variable.TEMPERATURE_2M,
    "wind": Variable.WIND_SPEED_10M,
}


def _env_threads() -> int:
    return int(os.getenv("DECAL_THREADS", "1"))


def _env_output_dir() -> Path:
    return Path(os.getenv("DECAL_OUTPUT_DIR", "output"))


def env_log_level() -> str:
    return os.getenv("DECAL_LOG_LEVEL", "INFO").upper()


def _as_list(value):
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    ensemble: Path
    observations: Path
    mask: Optional[Path] = None
    variable: Optional[Variable] = None
    data_schema: Literal["csv", "binary"] = Field("csv", alias="schema")

    task: Literal["frost", "heat", "wind"]
    theta: List[float] = []
    cost_ratio: List[float] = []
    u_pen: List[float] = []
    standby_cost: List[float] = [DEFAULT_STANDBY_COST]
    hub_height_m: float = 120.0
    alpha: float = 0.1
    v_in: float = 3.0
    v_rated: float = 13.0
    v_off: float = 23.0

    leads_days: List[int] = DEFAULT_LEADS_DAYS
    init_hour: Optional[int] = Field(None, ge=0, le=23)

    diagnostics: bool = False
    crps_estimator: Literal["fair", "nrg"] = "fair"
    pit_bins: int = Field(20, ge=2)
    ssr_correction: bool = True

    lat_weighting: bool = False
    group_by_point: bool = True
    write_records: bool = False
    seed: int = Field(0, ge=0)
    threads: int = Field(default_factory=_env_threads, ge=1)
    output_dir: Path = Field(default_factory=_env_output_dir)
    format: Literal["csv", "json"] = "csv"

    @field_validator("theta", "cost_ratio", "u_pen", "standby_cost", "leads_days", mode="before")
    @classmethod
    def _listify(cls, value):
        return _as_list(value)

    @model_validator(mode="after")
    def _check_task(self):
        if not self.leads_days:
            raise ParamError("leads_days selects no lead time")
        bad = [d for d in self.leads_days if not 1 <= d <= MAX_LEAD_DAYS]
        if bad:
            raise ParamError(f"Lead times must lie in 1..{MAX_LEAD_DAYS} days, got {bad}")
        if self.variable is not None and self.variable is not TASK_VARIABLES[self.task]:
            raise ParamError(f"Task '{self.task}' needs {TASK_VARIABLES[self.task].value}, not {self.variable.value}")
        # builds every combo once so invalid parameters fail before any data is read
        self.tasks()
        return self

    @property
    def task_variable(self) -> Variable:
        return TASK_VARIABLES[self.task]

    @property
    def lead_hours(self) -> List[int]:
        return sorted(set(24 * d for d in self.leads_days))

    @property
    def transform_params(self) -> WindTransformParams:
        return WindTransformParams(
            hub_height_m=self.hub_height_m, alpha=self.alpha,
            v_in=self.v_in, v_rated=self.v_rated, v_off=self.v_off,
        )

    def combos(self) -> List[dict]:
        """Task parameters of every sweep point, in config order."""
        if self.task == "wind":
            if not self.u_pen:
                raise ParamError("wind: u_pen is required")
            return [{"u_pen": u, "standby_cost": s} for u, s in itertools.product(self.u_pen, self.standby_cost)]
        if not self.theta or not self.cost_ratio:
            raise ParamError(f"{self.task}: theta and cost_ratio are required")
        return [{"theta": t, "cost_ratio": c} for t, c in itertools.product(self.theta, self.cost_ratio)]

    def tasks(self) -> List[DecisionTask]:
        return [
            build_task(self.task, transform_params=self.transform_params, **combo)
            for combo in self.combos()
        ]

    @property
    def input_paths(self) -> List[Path]:
        return [p for p in (self.ensemble, self.observations, self.mask) if p is not None]

    def check_inputs(self):
        for path in self.input_paths:
            if not Path(path).is_file():
                raise IoError(f"Input file not found: {path}")


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    variable: Variable = Variable.TEMPERATURE_2M
    lat_start: float = 55.5
    lat_stop: float = 45.0
    lon_start: float = 0.0
    lon_stop: float = 9.0
    resolution_deg: float = Field(1.5, gt=0)
    n_days: int = Field(60, ge=1)
    start_date: str = "2021-01-01"
    init_hour: int = Field(0, ge=0, le=23)
    leads_days: List[int] = [1, 3, 5]
    members: int = Field(50, ge=2)
    climate_mean: float = 3.0
    seasonal_amplitude: float = 0.0
    lat_gradient: float = 0.0
    anomaly_sd: float = 3.0
    sigma_base: float = 1.0
    sigma_growth_per_day: float = 0.2
    forecasters: List[Literal["ideal", "biased", "dispersed", "shifted_tail"]] = ["ideal"]
    bias: float = 2.0
    spread: float = 0.5
    tail_shift: float = 3.0
    seed: int = Field(0, ge=0)
    data_schema: Literal["csv", "binary"] = Field("csv", alias="schema")
    output_dir: Path = Field(default_factory=_env_output_dir)

    @field_validator("leads_days", "forecasters", mode="before")
    @classmethod
    def _listify(cls, value):
        return _as_list(value)

    @model_validator(mode="after")
    def _check(self):
        if not self.forecasters:
            raise ParamError("forecasters lists no forecaster")
        if len(set(self.forecasters)) != len(self.forecasters):
            raise ParamError(f"Each forecaster kind may appear once, got {self.forecasters}")
        if not self.leads_days or any(not 1 <= d <= MAX_LEAD_DAYS for d in self.leads_days):
            raise ParamError(f"Lead times must lie in 1..{MAX_LEAD_DAYS} days, got {self.leads_days}")
        self.dgp()
        self.specs()
        return self

    @property
    def lead_hours(self) -> List[int]:
        return sorted(set(24 * d for d in self.leads_days))

    def grid(self) -> GridSpec:
        return GridSpec.regular(self.lat_start, self.lat_stop, self.lon_start, self.lon_stop, self.resolution_deg)

    def dgp(self) -> SyntheticDGP:
        return SyntheticDGP(
            grid=self.grid(),
            variable=self.variable,
            climate_mean=self.climate_mean,
            seasonal_amplitude=self.seasonal_amplitude,
            lat_gradient=self.lat_gradient,
            anomaly_sd=self.anomaly_sd,
            sigma_base=self.sigma_base,
            sigma_growth_per_day=self.sigma_growth_per_day,
            init_hour=self.init_hour,
            seed=self.seed,
        )

    def specs(self) -> dict:
        return {
            kind: ForecasterSpec(
                kind=kind, members=self.members, bias=self.bias, spread=self.spread, tail_shift=self.tail_shift,
            )
            for kind in self.forecasters
        }


def _read_yaml(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path.name}: not valid YAML ({e})") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path.name}: expected a mapping of keys to values")
    return data


def _resolve_paths(data: dict, base: Path) -> dict:
    for key in PATH_KEYS:
        if data.get(key) is not None:
            path = Path(data[key]).expanduser()
            data[key] = path if path.is_absolute() else (base / path).resolve()
    return data


def _validate(model, data: dict, source: str):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<config>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}") from None


def _with_overrides(data: dict, overrides: Optional[dict]) -> dict:
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return data


def load_run_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    data = _resolve_paths(_read_yaml(path), path.parent)
    return _validate(RunConfig, _with_overrides(data, overrides), path.name)


def load_synth_config(path, overrides: Optional[dict] = None) -> SynthConfig:
    path = Path(path)
    data = _resolve_paths(_read_yaml(path), path.parent)
    return _validate(SynthConfig, _with_overrides(data, overrides), path.name)


def _canonical(payload: dict) -> bytes:
    return orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)


def config_payload(config: BaseModel, exclude=frozenset()) -> dict:
    return config.model_dump(mode="json", by_alias=True, exclude=set(exclude))


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON of every result-relevant key."""
    return hashlib.sha256(_canonical(config_payload(config, RESULT_INVARIANT_KEYS))).hexdigest()


def comparison_key(config: BaseModel) -> dict:
    """What two runs must share to be comparable: everything except inputs and run plumbing."""
    return config_payload(config, RESULT_INVARIANT_KEYS | INPUT_KEYS)


def configure_logging(level: Optional[str] = None):
    level = (level or env_log_level()).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"Unknown log level '{level}'")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(show_path=False, markup=False)],
        force=True,
    )


def progress_enabled() -> bool:
    return logging.getLogger().getEffectiveLevel() <= logging.INFO
