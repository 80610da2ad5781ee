import logging
import time
from typing import Optional

from .evaluate_pass import base_metadata, diagnostics_tables, load_view, run_diagnostics_summary
from .report_io import Report, check_output_dir, write_report
from .run_config import RunConfig

logger = logging.getLogger(__name__)


def run_diagnostics(config: RunConfig, write: bool = True, out_dir: Optional[str] = None) -> Report:
    """
    Forecast-level calibration only: CRPS and SSR per lead, PIT histograms and the
    per-point CRPS field. Task parameters are not needed but still validated.
    """
    logger.info("--- Starting Diagnostics Pass ---")
    target = out_dir or config.output_dir
    if write:
        check_output_dir(target, config.input_paths)

    logger.info("[PHASE 1/3] Loading data")
    t0 = time.time()
    view = load_view(config)
    logger.info(f"✅ {len(view)} forecast cases aligned. ({time.time() - t0:.1f}s)")

    logger.info(f"[PHASE 2/3] Scoring ensembles ({config.crps_estimator} CRPS, {config.pit_bins} PIT bins)")
    t1 = time.time()
    summary = run_diagnostics_summary(config, view)
    for lead in summary.leads:
        logger.info(f"  +{lead.lead_hours}h: CRPS {lead.mean_crps:.4f}, SSR {lead.ssr:.3f}, PIT p={lead.pit_pvalue:.3g}")
    logger.info(f"✅ Diagnostics complete. ({time.time() - t1:.1f}s)")

    report = Report(
        kind="diagnostics",
        metadata={**base_metadata(config, view), "crps_estimator": summary.estimator, "pit_bins": summary.bins},
        tables=diagnostics_tables(summary),
        format=config.format,
    )
    logger.info("[PHASE 3/3] Writing report")
    if write:
        write_report(report, target, config.input_paths)
    logger.info("--- Diagnostics Pass Finished ---")
    return report
