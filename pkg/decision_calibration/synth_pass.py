import logging
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .grid_store import write_ensemble, write_observations
from .report_io import METADATA_FILE, dumps, staged_directory, timestamp
from .run_config import SynthConfig, config_hash, config_payload, progress_enabled
from .synthetic_bench import forecast, generate, write_latent

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
EXTENSIONS = {"csv": "csv", "binary": "bin"}
LATENT_FILE = "latent.csv"


def run_synth(config: SynthConfig, out_dir: Optional[str] = None) -> Path:
    """
    Writes synthetic observations, one ensemble per configured forecaster and the
    latent-law sidecar, all in the canonical file layouts.
    """
    out_dir = Path(out_dir or config.output_dir)
    ext = EXTENSIONS[config.data_schema]
    dgp = config.dgp()
    logger.info(f"--- Starting Synthetic Generation ({dgp.variable.value}, {dgp.grid.shape[0]}x{dgp.grid.shape[1]} grid) ---")

    logger.info(f"[PHASE 1/3] Simulating {config.n_days} days of outcomes")
    t0 = time.time()
    observations, latent = generate(
        dgp, config.n_days, config.lead_hours, config.start_date, progress=progress_enabled(),
    )
    logger.info(f"✅ {len(observations.valid_times)} valid times simulated. ({time.time() - t0:.1f}s)")

    logger.info(f"[PHASE 2/3] Drawing {len(config.forecasters)} forecaster ensemble(s)")
    ensembles = {}
    for name, spec in config.specs().items():
        t_spec = time.time()
        ensembles[name] = forecast(
            dgp, spec, config.n_days, config.lead_hours, config.start_date,
            latent=latent, progress=progress_enabled(),
        )
        logger.info(f"[{name}] ✅ {spec.members} members ({time.time() - t_spec:.1f}s)")

    logger.info("[PHASE 3/3] Writing files")
    files = {"observations": f"observations.{ext}", "latent": LATENT_FILE}
    files.update({name: f"ensemble_{name}.{ext}" for name in ensembles})
    with staged_directory(out_dir) as staging:
        write_observations(observations, staging / files["observations"], config.data_schema)
        for name, ensemble in ensembles.items():
            write_ensemble(ensemble, staging / files[name], config.data_schema)
        write_latent(latent, staging / LATENT_FILE)
        metadata = {
            "kind": "synth",
            "package_version": __version__,
            "config": config_payload(config),
            "config_hash": config_hash(config),
            "files": files,
            "created_at": timestamp(),
        }
        (staging / METADATA_FILE).write_bytes(dumps(metadata))
    logger.info(f"🎉 Synthetic data saved to: {out_dir}")
    return out_dir
