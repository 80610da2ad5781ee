import numpy as np
import pandas as pd
import pytest

from decision_calibration.grid_store import (
    EnsembleDataset,
    GridSpec,
    ObservationDataset,
    Variable,
    align,
)


@pytest.fixture
def grid_2x3():
    return GridSpec.from_coords([51.0, 49.5], [0.0, 1.5, 3.0])


@pytest.fixture
def make_view():
    """Aligned view with one case per init day on a single grid point."""

    def _make(members, observed, variable=Variable.TEMPERATURE_2M):
        members = np.atleast_2d(np.asarray(members, dtype=np.float64))
        observed = np.atleast_1d(np.asarray(observed, dtype=np.float64))
        n, m = members.shape
        grid = GridSpec.from_coords([50.0], [0.0], resolution_deg=1.5)
        inits = pd.date_range("2021-01-01", periods=n, freq="D", tz="UTC")
        ensemble = EnsembleDataset(variable, inits, (24,), grid, members.reshape(n, 1, 1, 1, m))
        observations = ObservationDataset(
            variable, inits + pd.Timedelta(hours=24), grid, observed.reshape(n, 1, 1)
        )
        return align(ensemble, observations)

    return _make


@pytest.fixture
def make_datasets(grid_2x3):
    """Ensemble and fully covering observations on the 2x3 grid."""

    def _make(n_init=2, leads=(24, 48), members=3, variable=Variable.TEMPERATURE_2M, seed=0):
        rng = np.random.default_rng(seed)
        inits = pd.date_range("2021-01-01", periods=n_init, freq="D", tz="UTC")
        values = 280.0 + rng.normal(size=(n_init, len(leads), *grid_2x3.shape, members))
        valid = pd.date_range(inits[0] + pd.Timedelta(hours=min(leads)), inits[-1] + pd.Timedelta(hours=max(leads)), freq="D")
        observed = 280.0 + rng.normal(size=(len(valid), *grid_2x3.shape))
        if variable is Variable.WIND_SPEED_10M:
            values, observed = np.abs(values - 280.0) * 5, np.abs(observed - 280.0) * 5
        ensemble = EnsembleDataset(variable, inits, leads, grid_2x3, values)
        observations = ObservationDataset(variable, valid, grid_2x3, observed)
        return ensemble, observations

    return _make
