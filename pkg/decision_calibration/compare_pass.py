import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .decision_core import relative_improvement_array
from .errors import ConfigError, ConfigMismatchError
from .report_io import FORMATS, Report, load_report, write_report

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
COMBO_KEYS = ["task", "combo", "lead_hours"]
POINT_KEYS = COMBO_KEYS + ["lat", "lon"]
SUFFIXES = ("_candidate", "_reference")
COMPARED_METRICS = {
    "cost_gap": "mean_cost_gap",
    "observed_cost": "mean_observed_cost",
    "aggregate_cost_gap": "aggregate_cost_gap",
}


def _check_comparable(candidate: Report, reference: Report):
    if candidate.kind != reference.kind:
        raise ConfigMismatchError(f"Cannot compare a {candidate.kind} report with a {reference.kind} report")
    key_a = candidate.metadata.get("comparison_key", {})
    key_b = reference.metadata.get("comparison_key", {})
    differing = sorted(k for k in set(key_a) | set(key_b) if key_a.get(k) != key_b.get(k))
    if differing:
        raise ConfigMismatchError(f"Reports differ in {', '.join(differing)}; only input data may differ")


def _winner(candidate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return np.where(candidate < reference, "candidate", np.where(candidate > reference, "reference", "tie"))


def _with_improvements(merged: pd.DataFrame, metrics: dict, label: str) -> pd.DataFrame:
    out = merged.copy()
    for name, column in metrics.items():
        ref = out[column + SUFFIXES[1]].to_numpy(dtype=np.float64)
        out[f"rel_{name}"] = relative_improvement_array(out[column + SUFFIXES[0]].to_numpy(dtype=np.float64), ref)
        zero = int(np.sum((ref == 0) & out[f"rel_{name}"].isna().to_numpy()))
        if zero:
            logger.warning(f"{label}: reference {name} is 0 in {zero} row(s); relative improvement left empty")
    return out


def _merge(candidate: pd.DataFrame, reference: pd.DataFrame, keys: list, columns: list, label: str) -> pd.DataFrame:
    merged = pd.merge(
        candidate[keys + columns], reference[keys + columns], on=keys, how="inner", suffixes=SUFFIXES, sort=True,
    )
    if len(merged) != len(candidate) or len(merged) != len(reference):
        raise ConfigMismatchError(
            f"{label}: {len(candidate)} candidate rows and {len(reference)} reference rows share only {len(merged)} keys"
        )
    return merged


def _decision_tables(candidate: Report, reference: Report) -> dict:
    tables = {}
    merged = _merge(
        candidate.tables["aggregates"], reference.tables["aggregates"],
        COMBO_KEYS, list(COMPARED_METRICS.values()), "aggregates",
    )
    tables["comparison"] = _with_improvements(merged, COMPARED_METRICS, "aggregates")

    if "point_fields" in candidate.tables and "point_fields" in reference.tables:
        # masks may differ, so only shared points are compared
        point_metrics = {k: v for k, v in COMPARED_METRICS.items() if k != "aggregate_cost_gap"}
        merged = pd.merge(
            candidate.tables["point_fields"][POINT_KEYS + list(point_metrics.values())],
            reference.tables["point_fields"][POINT_KEYS + list(point_metrics.values())],
            on=POINT_KEYS, how="inner", suffixes=SUFFIXES, sort=True,
        )
        tables["point_deltas"] = _with_improvements(merged, point_metrics, "point fields")
    return tables


def _crps_tables(candidate: Report, reference: Report) -> dict:
    tables = {}
    merged = _merge(
        candidate.tables["diagnostics"], reference.tables["diagnostics"],
        ["lead_hours"], ["mean_crps", "ssr"], "diagnostics",
    )
    tables["crps_deltas"] = _with_improvements(merged, {"crps": "mean_crps"}, "diagnostics")
    if "point_crps" in candidate.tables and "point_crps" in reference.tables:
        keys = ["lead_hours", "lat", "lon"]
        merged = pd.merge(
            candidate.tables["point_crps"], reference.tables["point_crps"],
            on=keys, how="inner", suffixes=SUFFIXES, sort=True,
        )
        tables["point_crps_deltas"] = _with_improvements(merged, {"crps": "mean_crps"}, "point CRPS")
    return tables


def ranking_table(comparison: pd.DataFrame, crps_deltas: Optional[pd.DataFrame]) -> pd.DataFrame:
    """Which input wins per combo and lead, by forecast-level and by decision-level metrics."""
    a, b = SUFFIXES
    ranking = comparison[COMBO_KEYS].copy()
    ranking["by_cost_gap"] = _winner(comparison["mean_cost_gap" + a].to_numpy(), comparison["mean_cost_gap" + b].to_numpy())
    ranking["by_observed_cost"] = _winner(
        comparison["mean_observed_cost" + a].to_numpy(), comparison["mean_observed_cost" + b].to_numpy()
    )
    if crps_deltas is None:
        ranking["by_crps"] = None
        ranking["by_ssr"] = None
        ranking["rankings_disagree"] = False
        return ranking

    per_lead = pd.DataFrame({
        "lead_hours": crps_deltas["lead_hours"],
        "by_crps": _winner(crps_deltas["mean_crps" + a].to_numpy(), crps_deltas["mean_crps" + b].to_numpy()),
        "by_ssr": _winner(
            np.abs(crps_deltas["ssr" + a].to_numpy() - 1.0), np.abs(crps_deltas["ssr" + b].to_numpy() - 1.0)
        ),
    })
    ranking = ranking.merge(per_lead, on="lead_hours", how="left")
    decided = (ranking["by_crps"] != "tie") & (ranking["by_cost_gap"] != "tie")
    ranking["rankings_disagree"] = decided & (ranking["by_crps"] != ranking["by_cost_gap"])
    return ranking


def run_compare(
    candidate_dir,
    reference_dir,
    out_dir=None,
    fmt: str = "csv",
    write: bool = True,
) -> Report:
    """
    Relative improvement of a candidate report over a reference report, (ref - cand) / ref,
    so 0.1 means the candidate is 10 % better.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"Unknown report format '{fmt}' (expected csv or json)")
    logger.info("--- Starting Comparison Pass ---")
    logger.info("[PHASE 1/3] Loading reports")
    candidate = load_report(candidate_dir)
    reference = load_report(reference_dir)
    _check_comparable(candidate, reference)
    logger.info(f"✅ Loaded {candidate.kind} reports {Path(candidate_dir).name} and {Path(reference_dir).name}")

    logger.info("[PHASE 2/3] Computing relative improvements")
    tables = {}
    if "aggregates" in candidate.tables:
        tables.update(_decision_tables(candidate, reference))
    has_crps = "diagnostics" in candidate.tables and "diagnostics" in reference.tables
    if has_crps:
        tables.update(_crps_tables(candidate, reference))
    if "comparison" in tables:
        tables["ranking"] = ranking_table(tables["comparison"], tables.get("crps_deltas"))
        disagreements = int(tables["ranking"]["rankings_disagree"].sum())
        if disagreements:
            logger.info(f"Forecast-level and decision-level rankings disagree in {disagreements} row(s)")
    if not tables:
        raise ConfigMismatchError("The reports hold neither decision results nor diagnostics to compare")
    logger.info(f"✅ {len(tables)} comparison table(s) built.")

    report = Report(
        kind="compare",
        metadata={
            "candidate": str(candidate_dir),
            "reference": str(reference_dir),
            "candidate_hash": candidate.metadata.get("config_hash"),
            "reference_hash": reference.metadata.get("config_hash"),
            "comparison_key": candidate.metadata.get("comparison_key", {}),
        },
        tables=tables,
        format=fmt,
    )
    logger.info("[PHASE 3/3] Writing report")
    if write:
        write_report(report, out_dir or Path(candidate_dir).parent / "comparison", inputs=(candidate_dir, reference_dir))
    logger.info("--- Comparison Pass Finished ---")
    return report
