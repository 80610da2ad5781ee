import logging
import time
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from .decision_core import RECORD_COLUMNS, aggregate, evaluate, records_frame
from .diagnostics import DiagnosticsSummary, summarize
from .grid_store import TIME_FORMAT, AlignedView, align, load_ensemble, load_mask, load_observations
from .report_io import Report, check_output_dir, write_report
from .run_config import RunConfig, comparison_key, config_hash, config_payload, progress_enabled
from .tasks import DecisionTask

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
AGGREGATE_COLUMNS = [
    "lead_hours", "count", "mean_cost_gap", "mean_observed_cost", "mean_expected_cost",
    "aggregate_cost_gap", "mean_signed_error",
]
POINT_COLUMNS = [
    "lead_hours", "lat", "lon", "count", "mean_cost_gap", "mean_observed_cost", "mean_expected_cost",
]


def load_view(config: RunConfig) -> AlignedView:
    """Reads ensemble, observations and mask, and pairs them up for the configured leads."""
    config.check_inputs()
    variable = config.variable or config.task_variable
    ensemble = load_ensemble(config.ensemble, config.data_schema, variable)
    observations = load_observations(config.observations, config.data_schema, variable, grid=ensemble.grid)
    mask = load_mask(config.mask, ensemble.grid) if config.mask else None
    return align(ensemble, observations, mask, lead_hours=config.lead_hours, init_hour=config.init_hour)


def base_metadata(config: RunConfig, view: AlignedView) -> dict:
    return {
        "config": config_payload(config),
        "config_hash": config_hash(config),
        "comparison_key": comparison_key(config),
        "variable": view.ensemble.variable.value,
        "members": int(view.ensemble.members),
        "case_count": len(view),
        "lead_hours": view.leads,
        "mask": view.mask.name,
        "mask_points": view.mask.count,
    }


def _combo_columns(task: DecisionTask) -> dict:
    return {"task": task.cost_fn.name, "combo": task.label, **task.params}


def _aggregate_rows(task: DecisionTask, records, config: RunConfig) -> List[dict]:
    return [
        {
            **_combo_columns(task),
            "lead_hours": r.lead_hours,
            "count": r.count,
            "mean_cost_gap": r.mean_cost_gap,
            "mean_observed_cost": r.mean_observed_cost,
            "mean_expected_cost": r.mean_expected_cost,
            "aggregate_cost_gap": r.aggregate_cost_gap,
            "mean_signed_error": r.mean_signed_error,
        }
        for r in aggregate(records, ("lead",), lat_weighted=config.lat_weighting)
    ]


def _point_rows(task: DecisionTask, records) -> List[dict]:
    return [
        {
            **_combo_columns(task),
            "lead_hours": r.lead_hours,
            "lat": r.lat,
            "lon": r.lon,
            "count": r.count,
            "mean_cost_gap": r.mean_cost_gap,
            "mean_observed_cost": r.mean_observed_cost,
            "mean_expected_cost": r.mean_expected_cost,
        }
        for r in aggregate(records, ("lead", "point"))
    ]


def action_frequencies(task: DecisionTask, frame: pd.DataFrame) -> pd.DataFrame:
    """Share of every action per lead time, zero shares included."""
    labels = task.cost_fn.action_space.labels
    counts = (
        frame.groupby(["lead_hours", "action"]).size()
        .unstack(fill_value=0)
        .reindex(columns=range(len(labels)), fill_value=0)
    )
    rows = []
    for lead, row in counts.iterrows():
        total = int(row.sum())
        for action, count in row.items():
            rows.append({
                **_combo_columns(task),
                "lead_hours": int(lead),
                "action": int(action),
                "label": labels[action],
                "count": int(count),
                "share": count / total,
            })
    return pd.DataFrame(rows)


def diagnostics_tables(summary: DiagnosticsSummary) -> dict:
    return {
        "diagnostics": summary.table(),
        "pit_histograms": summary.pit_table(),
        "point_crps": summary.point_crps,
    }


def run_diagnostics_summary(config: RunConfig, view: AlignedView) -> DiagnosticsSummary:
    return summarize(
        view,
        estimator=config.crps_estimator,
        bins=config.pit_bins,
        seed=config.seed,
        ssr_correction=config.ssr_correction,
        n_jobs=config.threads,
        progress=progress_enabled(),
    )


def run_evaluate(config: RunConfig, write: bool = True, out_dir: Optional[str] = None) -> Report:
    """
    Decision-calibration evaluation of one forecast against observations for every
    task parameter combination of the config.
    """
    logger.info(f"--- Starting Evaluation Pass ({config.task}) ---")
    n_phases = 4

    target = out_dir or config.output_dir
    if write:
        check_output_dir(target, config.input_paths)

    logger.info(f"[PHASE 1/{n_phases}] Loading data")
    t0 = time.time()
    view = load_view(config)
    logger.info(f"✅ {len(view)} forecast cases aligned. ({time.time() - t0:.1f}s)")

    tasks = config.tasks()
    logger.info(f"[PHASE 2/{n_phases}] Evaluating {len(tasks)} task combination(s)")
    t1 = time.time()
    aggregates, points, frequencies = [], [], []
    tables = {}
    for k, task in enumerate(tqdm(tasks, desc="Task combos", disable=not progress_enabled())):
        records = evaluate(view, task.cost_fn, task.transform, n_jobs=config.threads)
        aggregates.extend(_aggregate_rows(task, records, config))
        if config.group_by_point:
            points.extend(_point_rows(task, records))
        frame = records_frame(records)
        frequencies.append(action_frequencies(task, frame))
        if config.write_records:
            frame["init_time"] = frame["init_time"].dt.strftime(TIME_FORMAT)
            tables[f"records_{k:02d}"] = frame[list(RECORD_COLUMNS)]
        logger.debug(f"{task.label}: mean cost gap {np.mean([r.cost_gap for r in records]):.4f}")
    tables["aggregates"] = pd.DataFrame(aggregates)
    if config.group_by_point:
        tables["point_fields"] = pd.DataFrame(points)
    tables["action_frequencies"] = pd.concat(frequencies, ignore_index=True)
    logger.info(f"✅ Decisions evaluated. ({time.time() - t1:.1f}s)")

    logger.info(f"[PHASE 3/{n_phases}] Calibration diagnostics")
    if config.diagnostics:
        t2 = time.time()
        tables.update(diagnostics_tables(run_diagnostics_summary(config, view)))
        logger.info(f"✅ CRPS, PIT and SSR computed. ({time.time() - t2:.1f}s)")
    else:
        logger.info("Diagnostics disabled, skipping.")

    metadata = base_metadata(config, view)
    metadata["combos"] = [task.label for task in tasks]
    report = Report(kind="evaluate", metadata=metadata, tables=tables, format=config.format)

    logger.info(f"[PHASE 4/{n_phases}] Writing report")
    if write:
        write_report(report, target, config.input_paths)
    logger.info("--- Evaluation Pass Finished ---")
    return report
