"""
Bayes decision rule over ensemble forecasts and decision calibration.

For every forecast case the action with the lowest Monte-Carlo expected cost
under the ensemble is taken. Its expected cost is then set against the cost
actually incurred once the observation is known; the absolute difference is the
cost gap of that case. Cost gaps are computed per observation and only then
averaged over time and space.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .errors import ConfigMismatchError, DomainError, EmptyGroupError, ParamError, ZeroReferenceError
from .grid_store import TIME_FORMAT, AlignedView
from .tasks import CostFunction, OutcomeTransform

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
CHUNK_SIZE = 4096
RECORD_COLUMNS = (
    "init_time", "lead_hours", "lat", "lon", "action", "expected_cost", "observed_cost", "cost_gap",
)
GROUPINGS = {
    ("lead",): ["lead_hours"],
    ("lead", "point"): ["lead_hours", "lat", "lon"],
}
METRICS = {
    "cost_gap": "mean_cost_gap",
    "observed_cost": "mean_observed_cost",
    "expected_cost": "mean_expected_cost",
    "aggregate_cost_gap": "aggregate_cost_gap",
}


@dataclass(frozen=True)
class DecisionRecord:
    init_time: pd.Timestamp
    lead_hours: int
    lat: float
    lon: float
    chosen_action: int
    expected_cost: float
    observed_cost: float
    cost_gap: float

    @property
    def signed_error(self) -> float:
        return self.expected_cost - self.observed_cost


@dataclass(frozen=True)
class AggregateResult:
    lead_hours: int
    count: int
    mean_cost_gap: float
    mean_observed_cost: float
    mean_expected_cost: float
    lat: Optional[float] = None
    lon: Optional[float] = None

    @property
    def mean_signed_error(self) -> float:
        return self.mean_expected_cost - self.mean_observed_cost

    @property
    def aggregate_cost_gap(self) -> float:
        """|mean expected - mean observed|, the average-then-difference form."""
        return abs(self.mean_signed_error)

    @property
    def key(self) -> tuple:
        return (self.lead_hours, self.lat, self.lon)


def _check_domain(members: np.ndarray, cost_fn: CostFunction):
    if not np.all(cost_fn.in_domain(members)):
        bad = np.asarray(members)[~cost_fn.in_domain(members)]
        raise DomainError(
            f"{cost_fn.name}: outcome {float(bad.flat[0])} outside the domain {cost_fn.outcome_domain}"
        )


def expected_costs(members: np.ndarray, cost_fn: CostFunction) -> np.ndarray:
    """
    Monte-Carlo expected cost of every action: (..., M) samples -> (..., A).
    Members are sorted first so the result does not depend on member order;
    constant-cost actions get their constant exactly.
    """
    ordered = np.sort(np.asarray(members, dtype=np.float64), axis=-1)
    columns = []
    for piece in cost_fn.pieces:
        if piece.is_constant:
            columns.append(np.full(ordered.shape[:-1], piece.values[0]))
        else:
            columns.append(piece(ordered).mean(axis=-1))
    return np.stack(columns, axis=-1)


def expected_cost(members, action: int, cost_fn: CostFunction) -> float:
    members = np.asarray(members, dtype=np.float64)
    if members.size == 0:
        raise ParamError("Need at least one ensemble member")
    _check_domain(members, cost_fn)
    return float(expected_costs(members, cost_fn)[action])


def bayes_action(members, cost_fn: CostFunction) -> tuple:
    """(action id, expected cost) of the cheapest action; ties go to the lowest id."""
    members = np.asarray(members, dtype=np.float64)
    if members.size == 0:
        raise ParamError("Need at least one ensemble member")
    _check_domain(members, cost_fn)
    costs = expected_costs(members, cost_fn)
    action = int(np.argmin(costs))
    return action, float(costs[action])


def _decide(members: np.ndarray, observed: np.ndarray, cost_fn: CostFunction):
    costs = expected_costs(members, cost_fn)
    actions = np.argmin(costs, axis=1)
    rows = np.arange(len(actions))
    observed_costs = cost_fn.cost_table(observed)[actions, rows]
    return actions, costs[rows, actions], observed_costs


def evaluate(
    view: AlignedView,
    cost_fn: CostFunction,
    transform: Optional[OutcomeTransform] = None,
    n_jobs: int = 1,
    chunk_size: int = CHUNK_SIZE,
    progress: bool = False,
) -> list:
    """One DecisionRecord per case of the view, in the view's (init, lead, lat, lon) order."""
    if len(view) == 0:
        raise EmptyGroupError("Nothing to evaluate: the aligned view is empty")
    members = view.members
    observed = view.observed
    if transform is not None:
        members = transform(members)
        observed = transform(observed)
    members = np.asarray(members, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)

    outside = ~cost_fn.in_domain(members).all(axis=1) | ~cost_fn.in_domain(observed)
    if outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise DomainError(
            f"{cost_fn.name}: outcome outside the domain {cost_fn.outcome_domain} at {view.describe(k)}"
        )

    chunks = [slice(start, start + chunk_size) for start in range(0, len(view), chunk_size)]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_decide)(members[chunk], observed[chunk], cost_fn)
        for chunk in tqdm(chunks, desc=f"Deciding ({cost_fn.name})", disable=not progress, leave=False)
    )
    actions = np.concatenate([r[0] for r in results])
    expected = np.concatenate([r[1] for r in results])
    incurred = np.concatenate([r[2] for r in results])
    gaps = np.abs(expected - incurred)

    return [
        DecisionRecord(init, int(lead), float(lat), float(lon), int(a), float(e), float(o), float(g))
        for init, lead, lat, lon, a, e, o, g in zip(
            view.init_times, view.lead_hours, view.lats, view.lons, actions, expected, incurred, gaps
        )
    ]


def records_frame(records: Sequence[DecisionRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "init_time": pd.DatetimeIndex([r.init_time for r in records]),
        "lead_hours": np.array([r.lead_hours for r in records], dtype=np.int64),
        "lat": np.array([r.lat for r in records], dtype=np.float64),
        "lon": np.array([r.lon for r in records], dtype=np.float64),
        "action": np.array([r.chosen_action for r in records], dtype=np.int64),
        "expected_cost": np.array([r.expected_cost for r in records], dtype=np.float64),
        "observed_cost": np.array([r.observed_cost for r in records], dtype=np.float64),
        "cost_gap": np.array([r.cost_gap for r in records], dtype=np.float64),
    })


def write_records(records: Sequence[DecisionRecord], path) -> Path:
    frame = records_frame(records)
    frame["init_time"] = frame["init_time"].dt.strftime(TIME_FORMAT)
    frame.to_csv(path, index=False, columns=list(RECORD_COLUMNS), float_format="%.17g")
    return Path(path)


def aggregate(
    records: Sequence[DecisionRecord],
    group_by: Sequence[str] = ("lead",),
    lat_weighted: bool = False,
) -> list:
    """
    Means of cost gap, observed and expected cost per lead time (and optionally per
    grid point). With `lat_weighted`, grid points are weighted by cos(latitude).
    """
    if not records:
        raise EmptyGroupError("No decision records to aggregate")
    group_key = tuple(group_by)
    if group_key not in GROUPINGS:
        raise ParamError(f"Unsupported grouping {group_key}; use ('lead',) or ('lead', 'point')")
    keys = GROUPINGS[group_key]

    # fixed summation order, whatever order the records came in
    frame = records_frame(records).sort_values(
        ["init_time", "lead_hours", "lat", "lon"], kind="mergesort", ignore_index=True
    )
    weights = np.cos(np.deg2rad(frame["lat"].to_numpy())) if lat_weighted else np.ones(len(frame))
    frame["weight"] = weights
    for column in ("cost_gap", "observed_cost", "expected_cost"):
        frame[f"w_{column}"] = weights * frame[column].to_numpy()

    grouped = frame.groupby(keys, sort=True)
    sums = grouped[["weight", "w_cost_gap", "w_observed_cost", "w_expected_cost"]].sum()
    counts = grouped.size()

    results = []
    for key, row in sums.iterrows():
        key = key if isinstance(key, tuple) else (key,)
        total = row["weight"]
        results.append(AggregateResult(
            lead_hours=int(key[0]),
            count=int(counts.loc[key if len(key) > 1 else key[0]]),
            mean_cost_gap=float(row["w_cost_gap"] / total),
            mean_observed_cost=float(row["w_observed_cost"] / total),
            mean_expected_cost=float(row["w_expected_cost"] / total),
            lat=float(key[1]) if len(key) > 1 else None,
            lon=float(key[2]) if len(key) > 1 else None,
        ))
    return results


def relative_improvement(
    candidate: AggregateResult,
    reference: AggregateResult,
    metric: str = "cost_gap",
) -> float:
    """(reference - candidate) / reference; 0.1 means the candidate is 10 % better."""
    if metric not in METRICS:
        raise ParamError(f"Unknown metric '{metric}' (expected one of {', '.join(METRICS)})")
    if candidate.key != reference.key:
        raise ConfigMismatchError(f"Cannot compare group {candidate.key} with {reference.key}")
    ref = getattr(reference, METRICS[metric])
    if ref == 0:
        raise ZeroReferenceError(f"Reference {metric} is 0 for group {reference.key}")
    return (ref - getattr(candidate, METRICS[metric])) / ref


def relative_improvement_array(candidate, reference) -> np.ndarray:
    """Element-wise relative improvement; 0 where both agree, NaN where only the reference is 0."""
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    shape = np.broadcast(candidate, reference).shape
    out = np.full(shape, np.nan)
    nonzero = np.broadcast_to(reference != 0, shape)
    np.divide(reference - candidate, reference, out=out, where=nonzero)
    out[np.broadcast_to(candidate == reference, shape)] = 0.0
    return out
