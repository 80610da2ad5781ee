"""
Canonical data model for gridded ensemble forecasts, observations and region masks,
plus readers/writers for the two interchange layouts:

* long-form CSV (portable baseline), one value per row
* compact little-endian binary (`DCL1` magic), the fast path for large grids

Binary layout: magic, six u32 header fields (times, leads, lats, lons, members,
variable code), f64 coordinates (epoch seconds, lead hours, lats, lons), then f32
values row-major. The member count and variable code follow the four axis sizes,
so files written with a four-field header do not read back here. Observations
use one lead and one member.

Internally latitudes run north to south, longitudes live in [0, 360) and run east
from the western edge of the grid (a grid may straddle the Greenwich meridian).
"""
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    CoverageError,
    EmptyMaskError,
    IoError,
    SchemaError,
    ValidationError,
)

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
ENSEMBLE_COLUMNS = ("init_time", "lead_hours", "lat", "lon", "member", "value")
OBSERVATION_COLUMNS = ("valid_time", "lat", "lon", "value")
MASK_COLUMNS = ("lat", "lon")
BINARY_MAGIC = b"DCL1"
BINARY_HEADER = struct.Struct("<4s6I")  # magic, times, leads, lats, lons, members, variable
COORD_TOLERANCE = 1e-9
DEFAULT_RESOLUTION_DEG = 1.5
LEAD_STEP_HOURS = 24
MAX_LEAD_HOURS = 360
TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

PathLike = Union[str, Path]


class Variable(str, Enum):
    TEMPERATURE_2M = "temperature_2m"  # Kelvin
    WIND_SPEED_10M = "wind_speed_10m"  # m/s

    @property
    def code(self) -> int:
        return list(Variable).index(self)

    @classmethod
    def from_code(cls, code: int) -> "Variable":
        try:
            return list(cls)[code]
        except IndexError:
            raise SchemaError(f"Unknown variable code {code}") from None


def normalize_lon(lon):
    return np.mod(np.asarray(lon, dtype=np.float64), 360.0)


def _order_lons(lons: np.ndarray) -> np.ndarray:
    """Sorts unique [0, 360) longitudes so that the widest gap becomes the wrap-around seam."""
    lons = np.unique(lons)
    if len(lons) < 2:
        return lons
    gaps = np.diff(np.append(lons, lons[0] + 360.0))
    if gaps[-1] >= gaps.max() - COORD_TOLERANCE:
        return lons
    start = int(np.argmax(gaps)) + 1
    return np.roll(lons, -start)


@dataclass(frozen=True)
class GridSpec:
    lats: tuple
    lons: tuple
    resolution_deg: float

    def __post_init__(self):
        lats = np.asarray(self.lats, dtype=np.float64)
        lons = np.asarray(self.lons, dtype=np.float64)
        if lats.size == 0 or lons.size == 0:
            raise ValidationError("Grid needs at least one latitude and one longitude")
        if not self.resolution_deg > 0:
            raise ValidationError(f"Grid resolution must be positive, got {self.resolution_deg}")
        if np.any(np.abs(lats) > 90.0):
            raise ValidationError("Latitudes must lie within [-90, 90]")
        if np.any((lons < 0.0) | (lons >= 360.0)):
            raise ValidationError("Longitudes must be normalized to [0, 360)")
        lat_steps = -np.diff(lats)
        if np.any(np.abs(lat_steps - self.resolution_deg) > COORD_TOLERANCE):
            raise ValidationError(
                f"Latitudes must descend in steps of {self.resolution_deg}°"
            )
        lon_steps = np.mod(np.diff(lons), 360.0)
        if np.any(np.abs(lon_steps - self.resolution_deg) > COORD_TOLERANCE):
            raise ValidationError(
                f"Longitudes must advance in steps of {self.resolution_deg}°"
            )

    @classmethod
    def from_coords(cls, lats, lons, resolution_deg: Optional[float] = None) -> "GridSpec":
        """Builds a grid from unordered coordinate values, applying the internal conventions."""
        lat_values = np.unique(np.asarray(lats, dtype=np.float64))[::-1]
        lon_values = _order_lons(normalize_lon(lons))
        if resolution_deg is None:
            if len(lat_values) > 1:
                resolution_deg = float(lat_values[0] - lat_values[1])
            elif len(lon_values) > 1:
                resolution_deg = float(np.mod(lon_values[1] - lon_values[0], 360.0))
            else:
                resolution_deg = DEFAULT_RESOLUTION_DEG
        return cls(
            lats=tuple(float(v) for v in lat_values),
            lons=tuple(float(v) for v in lon_values),
            resolution_deg=float(resolution_deg),
        )

    @classmethod
    def regular(cls, lat_start, lat_stop, lon_start, lon_stop, resolution_deg) -> "GridSpec":
        """Regular grid spanning both bounds inclusively."""
        n_lat = int(round(abs(lat_stop - lat_start) / resolution_deg)) + 1
        n_lon = int(round(abs(lon_stop - lon_start) / resolution_deg)) + 1
        lats = lat_start + np.sign(lat_stop - lat_start or 1) * resolution_deg * np.arange(n_lat)
        lons = lon_start + resolution_deg * np.arange(n_lon)
        return cls.from_coords(lats, lons, resolution_deg)

    @property
    def shape(self) -> tuple:
        return (len(self.lats), len(self.lons))

    @property
    def lat_array(self) -> np.ndarray:
        return np.asarray(self.lats, dtype=np.float64)

    @property
    def lon_array(self) -> np.ndarray:
        return np.asarray(self.lons, dtype=np.float64)

    @cached_property
    def _lat_lookup(self) -> dict:
        return {round(v, 6): i for i, v in enumerate(self.lats)}

    @cached_property
    def _lon_lookup(self) -> dict:
        return {round(v, 6): j for j, v in enumerate(self.lons)}

    def locate(self, lat: float, lon: float) -> tuple:
        """(row, column) of a grid point; AlignmentError when the point is not on the grid."""
        i = self._lat_lookup.get(round(float(lat), 6))
        j = self._lon_lookup.get(round(float(normalize_lon(lon)), 6))
        if i is None or j is None:
            raise AlignmentError(f"Point ({lat}, {lon}) is not on the {self.resolution_deg}° grid")
        return i, j


def _as_utc_index(times) -> pd.DatetimeIndex:
    index = pd.DatetimeIndex(times)
    return index.tz_localize("UTC") if index.tz is None else index.tz_convert("UTC")


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class EnsembleDataset:
    """Values indexed (init, lead, lat, lon, member)."""

    variable: Variable
    init_times: pd.DatetimeIndex
    lead_hours: tuple
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variable", Variable(self.variable))
        object.__setattr__(self, "init_times", _as_utc_index(self.init_times))
        object.__setattr__(self, "lead_hours", tuple(int(h) for h in self.lead_hours))
        object.__setattr__(self, "values", _readonly(self.values))

        if not self.init_times.is_monotonic_increasing or not self.init_times.is_unique:
            raise ValidationError("Init times must be unique and increasing")
        for lead in self.lead_hours:
            if lead <= 0 or lead > MAX_LEAD_HOURS or lead % LEAD_STEP_HOURS:
                raise ValidationError(
                    f"Lead time {lead}h is not a multiple of {LEAD_STEP_HOURS}h up to {MAX_LEAD_HOURS}h"
                )
        if list(self.lead_hours) != sorted(set(self.lead_hours)):
            raise ValidationError("Lead times must be unique and increasing")
        expected = (len(self.init_times), len(self.lead_hours)) + self.grid.shape
        if self.values.ndim != 5 or self.values.shape[:4] != expected:
            raise ValidationError(
                f"Ensemble values have shape {self.values.shape}, expected {expected} + (members,)"
            )
        if self.values.shape[4] < 1:
            raise ValidationError("Ensemble needs at least one member")
        _check_values(self.values, self.variable)

    @property
    def members(self) -> int:
        return self.values.shape[4]


@dataclass(frozen=True, eq=False)
class ObservationDataset:
    """Values indexed (valid time, lat, lon)."""

    variable: Variable
    valid_times: pd.DatetimeIndex
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variable", Variable(self.variable))
        object.__setattr__(self, "valid_times", _as_utc_index(self.valid_times))
        object.__setattr__(self, "values", _readonly(self.values))

        if not self.valid_times.is_monotonic_increasing or not self.valid_times.is_unique:
            raise ValidationError("Valid times must be unique and increasing")
        expected = (len(self.valid_times),) + self.grid.shape
        if self.values.shape != expected:
            raise ValidationError(f"Observation values have shape {self.values.shape}, expected {expected}")
        _check_values(self.values, self.variable)


def _check_values(values: np.ndarray, variable: Variable):
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{int(np.sum(~np.isfinite(values)))} non-finite values (NaN/Inf)")
    if variable is Variable.WIND_SPEED_10M and np.any(values < 0):
        raise ValidationError(f"Negative wind speed {float(values.min())} m/s")


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: GridSpec
    included: np.ndarray
    name: str = "full"

    def __post_init__(self):
        included = np.array(self.included, dtype=bool, copy=True)
        included.setflags(write=False)
        object.__setattr__(self, "included", included)
        if included.shape != self.grid.shape:
            raise AlignmentError(f"Mask shape {included.shape} does not match grid {self.grid.shape}")
        if not included.any():
            raise EmptyMaskError(f"Mask '{self.name}' includes no grid point")

    @classmethod
    def full(cls, grid: GridSpec) -> "RegionMask":
        return cls(grid=grid, included=np.ones(grid.shape, dtype=bool), name="full")

    def points(self) -> np.ndarray:
        """(K, 2) array of included (row, column) indices in row-major order."""
        return np.argwhere(self.included)

    @property
    def count(self) -> int:
        return int(self.included.sum())


# --- CSV layout ---

def _read_csv(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    if not path.is_file():
        raise IoError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path.name}: file is empty, expected columns {', '.join(columns)}") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise SchemaError(f"{path.name}: not a readable CSV ({e})") from e
    except OSError as e:
        raise IoError(f"{path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    try:
        return pd.to_numeric(frame[column]).to_numpy(dtype=np.float64)
    except (ValueError, TypeError):
        raise SchemaError(f"{path.name}: column '{column}' must be numeric") from None


def _integer(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    values = _numeric(frame, column, path)
    if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
        raise SchemaError(f"{path.name}: column '{column}' must hold integers")
    return values.astype(np.int64)


def _times(frame: pd.DataFrame, column: str, path: Path) -> pd.DatetimeIndex:
    try:
        return pd.DatetimeIndex(pd.to_datetime(frame[column], utc=True))
    except (ValueError, TypeError):
        raise SchemaError(f"{path.name}: column '{column}' must hold ISO-8601 timestamps") from None


def _dense(path: Path, keys: Sequence[np.ndarray], axes: Sequence[pd.Index], values: np.ndarray) -> np.ndarray:
    """Scatters long-form rows into a dense array; every cell must be given exactly once."""
    positions = [axis.get_indexer(key) for axis, key in zip(axes, keys)]
    shape = tuple(len(axis) for axis in axes)
    flat = np.ravel_multi_index(positions, shape)
    if len(np.unique(flat)) != len(flat):
        raise SchemaError(f"{path.name}: duplicate rows make some values ambiguous")
    if len(flat) != int(np.prod(shape)):
        raise SchemaError(
            f"{path.name}: {int(np.prod(shape)) - len(flat)} cells of the {shape} grid have no row"
        )
    dense = np.empty(int(np.prod(shape)), dtype=np.float64)
    dense[flat] = values
    return dense.reshape(shape)


def _check_declared_grid(grid: GridSpec, declared: Optional[GridSpec], path: Path):
    if declared is not None and grid != declared:
        raise ValidationError(f"{path.name}: grid {grid.shape} does not match the declared grid {declared.shape}")


def load_ensemble(
    path: PathLike,
    schema: str = "csv",
    variable: Optional[Union[Variable, str]] = None,
    grid: Optional[GridSpec] = None,
) -> EnsembleDataset:
    path = Path(path)
    if schema == "binary":
        dataset = _read_binary_ensemble(path, variable)
        _check_declared_grid(dataset.grid, grid, path)
        return dataset
    if schema != "csv":
        raise SchemaError(f"Unknown schema '{schema}' (expected csv or binary)")

    frame = _read_csv(path, ENSEMBLE_COLUMNS)
    init = _times(frame, "init_time", path)
    lead = _integer(frame, "lead_hours", path)
    lat = _numeric(frame, "lat", path)
    lon = normalize_lon(_numeric(frame, "lon", path))
    member = _integer(frame, "member", path)
    values = _numeric(frame, "value", path)

    n_members = int(member.max()) + 1 if len(member) else 0
    if len(member) == 0 or not np.array_equal(np.unique(member), np.arange(n_members)):
        raise SchemaError(f"{path.name}: members must be numbered 0..M-1")
    grid_spec = GridSpec.from_coords(lat, lon)
    _check_declared_grid(grid_spec, grid, path)

    init_axis = init.unique().sort_values()
    lead_axis = pd.Index(np.unique(lead))
    dense = _dense(
        path,
        [init, lead, lat, lon, member],
        [init_axis, lead_axis, pd.Index(grid_spec.lats), pd.Index(grid_spec.lons), pd.RangeIndex(n_members)],
        values,
    )
    dataset = EnsembleDataset(
        variable=Variable(variable or Variable.TEMPERATURE_2M),
        init_times=init_axis,
        lead_hours=tuple(lead_axis),
        grid=grid_spec,
        values=dense,
    )
    logger.info(
        f"Loaded ensemble {path.name}: {len(init_axis)} inits x {len(lead_axis)} leads x "
        f"{grid_spec.shape[0]}x{grid_spec.shape[1]} grid x {n_members} members"
    )
    return dataset


def load_observations(
    path: PathLike,
    schema: str = "csv",
    variable: Optional[Union[Variable, str]] = None,
    grid: Optional[GridSpec] = None,
) -> ObservationDataset:
    path = Path(path)
    if schema == "binary":
        dataset = _read_binary_observations(path, variable)
        _check_declared_grid(dataset.grid, grid, path)
        return dataset
    if schema != "csv":
        raise SchemaError(f"Unknown schema '{schema}' (expected csv or binary)")

    frame = _read_csv(path, OBSERVATION_COLUMNS)
    if frame.empty:
        raise SchemaError(f"{path.name}: no observation rows")
    valid = _times(frame, "valid_time", path)
    lat = _numeric(frame, "lat", path)
    lon = normalize_lon(_numeric(frame, "lon", path))
    values = _numeric(frame, "value", path)

    grid_spec = GridSpec.from_coords(lat, lon)
    _check_declared_grid(grid_spec, grid, path)
    time_axis = valid.unique().sort_values()
    dense = _dense(
        path,
        [valid, lat, lon],
        [time_axis, pd.Index(grid_spec.lats), pd.Index(grid_spec.lons)],
        values,
    )
    dataset = ObservationDataset(
        variable=Variable(variable or Variable.TEMPERATURE_2M),
        valid_times=time_axis,
        grid=grid_spec,
        values=dense,
    )
    logger.info(f"Loaded observations {path.name}: {len(time_axis)} times on a {grid_spec.shape} grid")
    return dataset


def load_mask(path: PathLike, grid: GridSpec, name: Optional[str] = None) -> RegionMask:
    """
    Reads a mask either as a list of included (lat, lon) points or, when an
    `included` column is present, as a boolean grid.
    """
    path = Path(path)
    try:
        frame = _read_csv(path, MASK_COLUMNS)
    except SchemaError:
        if path.is_file() and path.stat().st_size == 0:
            raise EmptyMaskError(f"{path.name}: mask lists no grid point") from None
        raise
    if "included" in frame.columns:
        flags = frame["included"].astype(str).str.strip().str.lower().isin(["1", "true", "yes"])
        frame = frame[flags.to_numpy()]
    if frame.empty:
        raise EmptyMaskError(f"{path.name}: mask lists no grid point")

    included = np.zeros(grid.shape, dtype=bool)
    off_grid = []
    for lat, lon in zip(_numeric(frame, "lat", path), _numeric(frame, "lon", path)):
        try:
            i, j = grid.locate(lat, lon)
        except AlignmentError:
            off_grid.append((lat, lon))
            continue
        included[i, j] = True
    if off_grid:
        shown = ", ".join(f"({lat}, {lon})" for lat, lon in off_grid[:5])
        raise AlignmentError(f"{path.name}: {len(off_grid)} point(s) not on the {grid.resolution_deg}° grid: {shown}")
    return RegionMask(grid=grid, included=included, name=name or path.stem)


def _format_times(times: pd.DatetimeIndex) -> np.ndarray:
    return np.asarray(times.strftime(TIME_FORMAT))


def write_ensemble(dataset: EnsembleDataset, path: PathLike, schema: str = "csv") -> Path:
    path = Path(path)
    if schema == "binary":
        return _write_binary(
            path, dataset.variable, dataset.init_times, dataset.lead_hours,
            dataset.grid, dataset.values,
        )
    n_init, n_lead, n_lat, n_lon, n_mem = dataset.values.shape
    i, l, a, o, m = np.meshgrid(
        np.arange(n_init), np.arange(n_lead), np.arange(n_lat), np.arange(n_lon), np.arange(n_mem),
        indexing="ij",
    )
    frame = pd.DataFrame({
        "init_time": _format_times(dataset.init_times)[i.ravel()],
        "lead_hours": np.asarray(dataset.lead_hours, dtype=np.int64)[l.ravel()],
        "lat": dataset.grid.lat_array[a.ravel()],
        "lon": dataset.grid.lon_array[o.ravel()],
        "member": m.ravel(),
        "value": dataset.values.ravel(),
    })
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_observations(dataset: ObservationDataset, path: PathLike, schema: str = "csv") -> Path:
    path = Path(path)
    if schema == "binary":
        return _write_binary(
            path, dataset.variable, dataset.valid_times, (0,),
            dataset.grid, dataset.values[:, None, :, :, None],
        )
    n_time, n_lat, n_lon = dataset.values.shape
    t, a, o = np.meshgrid(np.arange(n_time), np.arange(n_lat), np.arange(n_lon), indexing="ij")
    frame = pd.DataFrame({
        "valid_time": _format_times(dataset.valid_times)[t.ravel()],
        "lat": dataset.grid.lat_array[a.ravel()],
        "lon": dataset.grid.lon_array[o.ravel()],
        "value": dataset.values.ravel(),
    })
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_mask(mask: RegionMask, path: PathLike) -> Path:
    path = Path(path)
    rows = mask.points()
    pd.DataFrame({
        "lat": mask.grid.lat_array[rows[:, 0]],
        "lon": mask.grid.lon_array[rows[:, 1]],
    }).to_csv(path, index=False, float_format="%.17g")
    return path


# --- Binary layout ---

def _write_binary(path: Path, variable: Variable, times, leads, grid: GridSpec, values: np.ndarray) -> Path:
    times = _as_utc_index(times)
    header = BINARY_HEADER.pack(
        BINARY_MAGIC, len(times), len(leads), len(grid.lats), len(grid.lons),
        values.shape[-1], Variable(variable).code,
    )
    epoch_seconds = (times - pd.Timestamp(0, tz="UTC")).total_seconds().to_numpy()
    with open(path, "wb") as f:
        f.write(header)
        for coords in (epoch_seconds, leads, grid.lats, grid.lons):
            f.write(np.asarray(coords, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
    return path


def _read_binary(path: Path):
    if not path.is_file():
        raise IoError(f"File not found: {path}")
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    if len(payload) < BINARY_HEADER.size:
        raise SchemaError(f"{path.name}: truncated header")
    magic, n_time, n_lead, n_lat, n_lon, n_mem, code = BINARY_HEADER.unpack_from(payload)
    if magic != BINARY_MAGIC:
        raise SchemaError(f"{path.name}: bad magic {magic!r}, expected {BINARY_MAGIC!r}")

    n_coords = n_time + n_lead + n_lat + n_lon
    n_values = n_time * n_lead * n_lat * n_lon * n_mem
    expected = BINARY_HEADER.size + 8 * n_coords + 4 * n_values
    if len(payload) != expected:
        raise SchemaError(f"{path.name}: {len(payload)} bytes, header implies {expected}")

    coords = np.frombuffer(payload, dtype="<f8", count=n_coords, offset=BINARY_HEADER.size)
    values = np.frombuffer(payload, dtype="<f4", count=n_values, offset=BINARY_HEADER.size + 8 * n_coords)
    times = pd.to_datetime(coords[:n_time], unit="s", utc=True)
    leads = coords[n_time:n_time + n_lead]
    lats = coords[n_time + n_lead:n_time + n_lead + n_lat]
    lons = coords[n_time + n_lead + n_lat:]
    grid = GridSpec.from_coords(lats, lons)
    if grid.lats != tuple(lats) or grid.lons != tuple(lons):
        raise SchemaError(f"{path.name}: coordinates are not in canonical order")
    shape = (n_time, n_lead, n_lat, n_lon, n_mem)
    return Variable.from_code(code), times, leads, grid, values.astype(np.float64).reshape(shape)


def _resolve_variable(stored: Variable, requested, path: Path) -> Variable:
    if requested is not None and Variable(requested) is not stored:
        raise ValidationError(f"{path.name}: holds {stored.value}, not {Variable(requested).value}")
    return stored


def _read_binary_ensemble(path: Path, variable) -> EnsembleDataset:
    stored, times, leads, grid, values = _read_binary(path)
    return EnsembleDataset(
        variable=_resolve_variable(stored, variable, path),
        init_times=times,
        lead_hours=tuple(int(h) for h in leads),
        grid=grid,
        values=values,
    )


def _read_binary_observations(path: Path, variable) -> ObservationDataset:
    stored, times, leads, grid, values = _read_binary(path)
    if values.shape[1] != 1 or values.shape[4] != 1 or leads[0] != 0:
        raise SchemaError(f"{path.name}: holds an ensemble, not observations")
    return ObservationDataset(
        variable=_resolve_variable(stored, variable, path),
        valid_times=times,
        grid=grid,
        values=values[:, 0, :, :, 0],
    )


# --- Alignment ---

class AlignedCase(NamedTuple):
    init_time: pd.Timestamp
    lead_hours: int
    lat: float
    lon: float
    members: np.ndarray
    observed: float


class AlignedView:
    """
    Forecast/observation pairs restricted to a mask, ordered by (init, lead, lat, lon).
    Iterating yields AlignedCase tuples; the block properties give the same cases
    as arrays for vectorized evaluation.
    """

    def __init__(self, ensemble, observations, mask, init_idx, lead_idx, time_idx, lat_idx, lon_idx):
        self.ensemble = ensemble
        self.observations = observations
        self.mask = mask
        self.init_idx = init_idx
        self.lead_idx = lead_idx
        self.time_idx = time_idx
        self.lat_idx = lat_idx
        self.lon_idx = lon_idx

    def __len__(self) -> int:
        return len(self.init_idx)

    def __iter__(self) -> Iterator[AlignedCase]:
        members = self.members
        observed = self.observed
        init_times = self.init_times
        for k in range(len(self)):
            yield AlignedCase(
                init_times[k], int(self.lead_hours[k]), float(self.lats[k]), float(self.lons[k]),
                members[k], float(observed[k]),
            )

    @cached_property
    def members(self) -> np.ndarray:
        """(N, M) member values."""
        return self.ensemble.values[self.init_idx, self.lead_idx, self.lat_idx, self.lon_idx, :]

    @cached_property
    def observed(self) -> np.ndarray:
        return self.observations.values[self.time_idx, self.lat_idx, self.lon_idx]

    @property
    def init_times(self) -> pd.DatetimeIndex:
        return self.ensemble.init_times[self.init_idx]

    @property
    def lead_hours(self) -> np.ndarray:
        return np.asarray(self.ensemble.lead_hours, dtype=np.int64)[self.lead_idx]

    @property
    def lats(self) -> np.ndarray:
        return self.ensemble.grid.lat_array[self.lat_idx]

    @property
    def lons(self) -> np.ndarray:
        return self.ensemble.grid.lon_array[self.lon_idx]

    @property
    def leads(self) -> list:
        """Distinct lead times present in the view."""
        return [int(h) for h in np.unique(self.lead_hours)]

    def describe(self, k: int) -> str:
        return (
            f"init={self.init_times[k]:%Y-%m-%dT%H:%MZ}, lead={int(self.lead_hours[k])}h, "
            f"lat={float(self.lats[k])}, lon={float(self.lons[k])}"
        )


def align(
    ens: EnsembleDataset,
    obs: ObservationDataset,
    mask: Optional[RegionMask] = None,
    lead_hours: Optional[Sequence[int]] = None,
    init_hour: Optional[int] = None,
) -> AlignedView:
    if ens.variable is not obs.variable:
        raise ValidationError(f"Ensemble holds {ens.variable.value}, observations hold {obs.variable.value}")
    if ens.grid != obs.grid:
        raise AlignmentError(f"Ensemble grid {ens.grid.shape} differs from observation grid {obs.grid.shape}")
    mask = mask or RegionMask.full(ens.grid)
    if mask.grid != ens.grid:
        raise AlignmentError(f"Mask '{mask.name}' is defined on a different grid")

    lead_positions = np.arange(len(ens.lead_hours))
    if lead_hours is not None:
        unknown = sorted(set(int(h) for h in lead_hours) - set(ens.lead_hours))
        if unknown:
            raise ValidationError(f"Lead time(s) {unknown} h not present in the ensemble")
        wanted = set(int(h) for h in lead_hours)
        lead_positions = np.array([k for k, h in enumerate(ens.lead_hours) if h in wanted])
    init_positions = np.arange(len(ens.init_times))
    if init_hour is not None:
        init_positions = np.flatnonzero(ens.init_times.hour == int(init_hour))
        if len(init_positions) == 0:
            raise ValidationError(f"No forecast initialized at {int(init_hour):02d} UTC")

    # (init, lead) pairs in order, with the matching observation time
    pair_init = np.repeat(init_positions, len(lead_positions))
    pair_lead = np.tile(lead_positions, len(init_positions))
    leads = pd.to_timedelta(np.asarray(ens.lead_hours, dtype=np.int64)[pair_lead], unit="h")
    valid = ens.init_times[pair_init] + leads
    pair_time = obs.valid_times.get_indexer(valid)
    if np.any(pair_time < 0):
        missing = [
            (ens.init_times[pair_init[k]], ens.lead_hours[pair_lead[k]])
            for k in np.flatnonzero(pair_time < 0)
        ]
        raise CoverageError(missing)

    points = mask.points()
    n_points = len(points)
    view = AlignedView(
        ens, obs, mask,
        init_idx=np.repeat(pair_init, n_points),
        lead_idx=np.repeat(pair_lead, n_points),
        time_idx=np.repeat(pair_time, n_points),
        lat_idx=np.tile(points[:, 0], len(pair_init)),
        lon_idx=np.tile(points[:, 1], len(pair_init)),
    )
    logger.debug(f"Aligned {len(view)} cases on mask '{mask.name}' ({n_points} points)")
    return view
