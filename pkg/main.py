import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import typer

from decision_calibration.compare_pass import run_compare
from decision_calibration.diagnostics_pass import run_diagnostics
from decision_calibration.errors import DecisionCalibrationError
from decision_calibration.evaluate_pass import run_evaluate
from decision_calibration.run_config import configure_logging, env_log_level, load_run_config, load_synth_config
from decision_calibration.synth_pass import run_synth

logger = logging.getLogger("decision_calibration")

# --- CONFIGURATION ---
INTERNAL_ERROR_EXIT = 4

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Decision calibration of ensemble forecasts: evaluate, diagnostics, compare, synth.",
)

ConfigOption = typer.Option(..., "--config", "-c", help="YAML run configuration")
SeedOption = typer.Option(None, "--seed", min=0, help="Overrides the config seed")
OutOption = typer.Option(None, "--out", help="Output directory")
FormatOption = typer.Option(None, "--format", help="Table format: csv or json")
ThreadsOption = typer.Option(None, "--threads", min=1, help="Worker threads (results do not depend on it)")


@contextmanager
def exit_codes():
    """Maps library errors onto exit codes: 2 config, 3 data, 4 internal."""
    try:
        yield
    except DecisionCalibrationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        raise typer.Exit(code=e.exit_code)
    except Exception as e:
        logger.exception(f"❌ Internal error: {e}")
        raise typer.Exit(code=INTERNAL_ERROR_EXIT)


def _overrides(seed, out, fmt, threads) -> dict:
    return {"seed": seed, "output_dir": out, "format": fmt, "threads": threads}


@app.callback()
def main(
    log_level: str = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR (default: DECAL_LOG_LEVEL or INFO)"),
):
    with exit_codes():
        configure_logging(log_level or env_log_level())


@app.command()
def evaluate(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[str] = FormatOption,
    threads: Optional[int] = ThreadsOption,
):
    """Bayes decisions, cost gaps and observed costs for every task combination."""
    with exit_codes():
        run_evaluate(load_run_config(config, _overrides(seed, out, fmt, threads)))


@app.command()
def diagnostics(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[str] = FormatOption,
    threads: Optional[int] = ThreadsOption,
):
    """CRPS, PIT histograms and spread-skill ratios per lead time."""
    with exit_codes():
        run_diagnostics(load_run_config(config, _overrides(seed, out, fmt, threads)))


@app.command()
def compare(
    candidate: Path = typer.Argument(..., help="Report directory of the candidate forecast"),
    reference: Path = typer.Argument(..., help="Report directory of the reference forecast"),
    out: Optional[Path] = OutOption,
    fmt: Optional[str] = FormatOption,
):
    """Relative improvement of the candidate over the reference (0.1 = 10 % better)."""
    with exit_codes():
        run_compare(candidate, reference, out_dir=out, fmt=fmt or "csv")


@app.command()
def synth(
    config: Path = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
):
    """Synthetic observations, forecaster ensembles and their latent laws."""
    with exit_codes():
        run_synth(load_synth_config(config, {"seed": seed, "output_dir": out}))


if __name__ == "__main__":
    app()
