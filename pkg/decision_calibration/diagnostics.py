"""
Forecast-level calibration diagnostics, reported next to the decision-level results:

* CRPS of the ensemble (fair or plain "nrg" estimator)
* randomized PIT values and their histogram, with a chi-square uniformity p-value
* spread-skill ratio with the finite-ensemble correction
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from tqdm import tqdm

from .errors import DegenerateEnsembleError, EmptyGroupError, ParamError, ZeroSkillError
from .grid_store import AlignedView

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
CRPS_ESTIMATORS = ("fair", "nrg")
DEFAULT_ESTIMATOR = "fair"
DEFAULT_PIT_BINS = 20
CHUNK_SIZE = 4096


def _pair_sums(ordered: np.ndarray) -> np.ndarray:
    """sum_{i,j} |x_i - x_j| per row of member-sorted values, in O(M) via ranks."""
    m = ordered.shape[-1]
    weights = 2.0 * np.arange(m) - m + 1.0
    return 2.0 * (ordered * weights).sum(axis=-1)


def crps_block(members: np.ndarray, observed: np.ndarray, estimator: str = DEFAULT_ESTIMATOR) -> np.ndarray:
    """CRPS for (N, M) ensembles against (N,) observations."""
    if estimator not in CRPS_ESTIMATORS:
        raise ParamError(f"Unknown CRPS estimator '{estimator}' (expected fair or nrg)")
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    m = members.shape[1]
    if m < 1 or (estimator == "fair" and m < 2):
        raise DegenerateEnsembleError(f"The {estimator} CRPS needs at least {2 if estimator == 'fair' else 1} members, got {m}")

    ordered = np.sort(members, axis=1)
    skill = np.abs(ordered - observed[:, None]).mean(axis=1)
    divisor = 2.0 * m * (m - 1) if estimator == "fair" else 2.0 * m * m
    crps = skill - _pair_sums(ordered) / divisor
    # guards against round-off just below zero
    return np.maximum(crps, 0.0)


def crps_ensemble(members, observation: float, estimator: str = DEFAULT_ESTIMATOR) -> float:
    members = np.asarray(members, dtype=np.float64).reshape(1, -1)
    return float(crps_block(members, np.array([observation]), estimator)[0])


def pit_value(members, observation: float, rng: np.random.Generator) -> float:
    """Randomized PIT: ties between observation and members are spread uniformly."""
    members = np.asarray(members, dtype=np.float64)
    below = np.count_nonzero(members < observation)
    equal = np.count_nonzero(members == observation)
    return float((below + rng.random() * (1 + equal)) / (members.size + 1))


def pit_values(members: np.ndarray, observed: np.ndarray, seed: int = 0, offset: int = 0) -> np.ndarray:
    """
    PIT value per case. Case k draws its uniform from a generator seeded with
    (seed, offset + k), so any chunking of the cases gives the same values.
    """
    members = np.asarray(members, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    below = np.count_nonzero(members < observed[:, None], axis=1)
    equal = np.count_nonzero(members == observed[:, None], axis=1)
    uniforms = np.array([
        np.random.default_rng([seed, offset + k]).random() for k in range(len(observed))
    ])
    return (below + uniforms * (1 + equal)) / (members.shape[1] + 1)


def pit_histogram(values, bins: int = DEFAULT_PIT_BINS) -> np.ndarray:
    if bins < 2:
        raise ParamError(f"Need at least 2 PIT bins, got {bins}")
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return counts


def pit_uniformity_pvalue(counts) -> float:
    """Chi-square goodness of fit of the histogram against a flat one."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.sum() == 0:
        return float("nan")
    return float(stats.chisquare(counts).pvalue)


def spread_skill_ratio(members: np.ndarray, observed: np.ndarray, correction: bool = True) -> float:
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    n, m = members.shape
    if n == 0:
        raise EmptyGroupError("Spread-skill ratio needs at least one case")
    if m < 2:
        raise DegenerateEnsembleError(f"Spread-skill ratio needs at least 2 members, got {m}")

    ordered = np.sort(members, axis=1)
    spread = np.sqrt(ordered.var(axis=1, ddof=1).mean())
    rmse = np.sqrt(np.mean((ordered.mean(axis=1) - observed) ** 2))
    if rmse == 0:
        raise ZeroSkillError("Ensemble mean matches every observation exactly (RMSE = 0)")
    factor = np.sqrt((m + 1) / m) if correction else 1.0
    return float(factor * spread / rmse)


@dataclass(frozen=True)
class LeadDiagnostics:
    lead_hours: int
    sample_count: int
    mean_crps: float
    ssr: float
    pit_histogram: tuple
    pit_pvalue: float


@dataclass
class DiagnosticsSummary:
    estimator: str
    bins: int
    leads: list = field(default_factory=list)
    point_crps: Optional[pd.DataFrame] = None

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "lead_hours": d.lead_hours,
                "sample_count": d.sample_count,
                "mean_crps": d.mean_crps,
                "ssr": d.ssr,
                "pit_pvalue": d.pit_pvalue,
            }
            for d in self.leads
        ])

    def pit_table(self) -> pd.DataFrame:
        rows = []
        for d in self.leads:
            rows.extend(
                {"lead_hours": d.lead_hours, "bin": b, "count": int(c)}
                for b, c in enumerate(d.pit_histogram)
            )
        return pd.DataFrame(rows, columns=["lead_hours", "bin", "count"])


def _chunk_scores(members, observed, estimator, seed, offset):
    return crps_block(members, observed, estimator), pit_values(members, observed, seed, offset)


def summarize(
    view: AlignedView,
    estimator: str = DEFAULT_ESTIMATOR,
    bins: int = DEFAULT_PIT_BINS,
    seed: int = 0,
    ssr_correction: bool = True,
    n_jobs: int = 1,
    chunk_size: int = CHUNK_SIZE,
    progress: bool = False,
) -> DiagnosticsSummary:
    """CRPS, SSR and PIT per lead time, plus the mean CRPS per grid point."""
    if len(view) == 0:
        raise EmptyGroupError("Nothing to diagnose: the aligned view is empty")
    members = view.members
    observed = view.observed
    if members.shape[1] < 2:
        raise DegenerateEnsembleError(f"Diagnostics need at least 2 members, got {members.shape[1]}")

    starts = range(0, len(view), chunk_size)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_chunk_scores)(
            members[s:s + chunk_size], observed[s:s + chunk_size], estimator, seed, s
        )
        for s in tqdm(starts, desc="Scoring ensembles", disable=not progress, leave=False)
    )
    crps = np.concatenate([r[0] for r in results])
    pit = np.concatenate([r[1] for r in results])

    summary = DiagnosticsSummary(estimator=estimator, bins=bins)
    lead_hours = view.lead_hours
    for lead in view.leads:
        rows = lead_hours == lead
        counts = pit_histogram(pit[rows], bins)
        summary.leads.append(LeadDiagnostics(
            lead_hours=lead,
            sample_count=int(rows.sum()),
            mean_crps=float(crps[rows].mean()),
            ssr=spread_skill_ratio(members[rows], observed[rows], ssr_correction),
            pit_histogram=tuple(int(c) for c in counts),
            pit_pvalue=pit_uniformity_pvalue(counts),
        ))
        logger.debug(f"Lead {lead}h: CRPS {summary.leads[-1].mean_crps:.4f}, SSR {summary.leads[-1].ssr:.3f}")

    frame = pd.DataFrame({"lead_hours": lead_hours, "lat": view.lats, "lon": view.lons, "crps": crps})
    summary.point_crps = (
        frame.groupby(["lead_hours", "lat", "lon"], sort=True)["crps"].mean()
        .rename("mean_crps").reset_index()
    )
    return summary
