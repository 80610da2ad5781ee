"""
Statistical checks on the synthetic benchmark: forecasters drawn from the true law
are decision-calibrated, miscalibrated ones are not, and the damage a distorted
forecast does depends on the decision task.
"""
import numpy as np
import pytest
from scipy import stats

from decision_calibration.decision_core import aggregate, evaluate, expected_costs
from decision_calibration.diagnostics import summarize
from decision_calibration.grid_store import GridSpec, Variable, align
from decision_calibration.synthetic_bench import (
    ForecasterSpec,
    SyntheticDGP,
    decision_calibration_bound,
    forecast,
    generate,
    latent_for_view,
    oracle_cost_table,
)
from decision_calibration.tasks import (
    WIND_POWER_BINS,
    FrostTaskParams,
    HeatTaskParams,
    WindTaskParams,
    frost_cost,
    heat_cost,
    kelvin_to_celsius,
    wind_cost,
    wind_power,
)

N_DAYS = 100
LEADS = [24]
FORECASTERS = {
    "ideal": ForecasterSpec("ideal"),
    "biased": ForecasterSpec("biased", bias=2.0),
    "dispersed": ForecasterSpec("dispersed", spread=0.5),
    "shifted_tail": ForecasterSpec("shifted_tail", tail_shift=4.0),
}


@pytest.fixture(scope="module")
def temperature_bench():
    grid = GridSpec.regular(60.0, 46.5, 0.0, 13.5, 1.5)
    dgp = SyntheticDGP(
        grid, Variable.TEMPERATURE_2M, climate_mean=1.5, anomaly_sd=3.0,
        sigma_base=1.5, sigma_growth_per_day=0.0, seed=11,
    )
    observations, latent = generate(dgp, N_DAYS, LEADS)
    views = {
        name: align(forecast(dgp, spec, N_DAYS, LEADS, latent=latent), observations)
        for name, spec in FORECASTERS.items()
    }
    return latent, views


@pytest.fixture(scope="module")
def wind_view():
    grid = GridSpec.regular(57.0, 51.0, 3.0, 9.0, 1.5)
    dgp = SyntheticDGP(
        grid, Variable.WIND_SPEED_10M, climate_mean=9.0, anomaly_sd=3.0,
        sigma_base=2.0, sigma_growth_per_day=0.0, seed=21,
    )
    observations, latent = generate(dgp, 40, LEADS)
    return align(forecast(dgp, ForecasterSpec("ideal"), 40, LEADS, latent=latent), observations)


def _signed_errors(records):
    return np.array([r.signed_error for r in records])


def test_bench_size(temperature_bench):
    _, views = temperature_bench

    assert len(views["ideal"]) == 10_000
    assert views["ideal"].members.shape == (10_000, 50)


def test_ideal_forecaster_is_decision_calibrated(temperature_bench):
    latent, views = temperature_bench
    cost = frost_cost(FrostTaskParams(theta=0.0, cost_ratio_c=0.5))
    view = views["ideal"]

    records = evaluate(view, cost, kelvin_to_celsius)
    oracle = oracle_cost_table(latent_for_view(latent, view), cost, kelvin_to_celsius)
    chosen = np.array([r.chosen_action for r in records])
    bound = decision_calibration_bound(
        [r.expected_cost for r in records],
        oracle[np.arange(len(records)), chosen],
        [r.observed_cost for r in records],
        k=3.0,
    )
    (result,) = aggregate(records)

    assert result.aggregate_cost_gap < bound


def test_oracle_agrees_with_ideal_ensemble(temperature_bench):
    latent, views = temperature_bench
    cost = frost_cost(FrostTaskParams(theta=0.0, cost_ratio_c=0.5))
    view = views["ideal"]

    oracle = oracle_cost_table(latent_for_view(latent, view), cost, kelvin_to_celsius)
    monte_carlo = expected_costs(kelvin_to_celsius(view.members), cost)

    # 50 members: per-case error well below the cost scale, and unbiased on average
    assert np.mean(np.abs(monte_carlo - oracle)) < 0.5
    assert abs(np.mean(monte_carlo - oracle)) < 0.02


@pytest.mark.parametrize("name", ["biased", "dispersed"])
def test_miscalibrated_forecasters_exceed_ideal(temperature_bench, name):
    _, views = temperature_bench
    cost = frost_cost(FrostTaskParams(theta=0.0, cost_ratio_c=0.5))

    ideal = evaluate(views["ideal"], cost, kelvin_to_celsius)
    distorted = evaluate(views[name], cost, kelvin_to_celsius)
    (ideal_result,) = aggregate(ideal)
    (distorted_result,) = aggregate(distorted)
    welch = stats.ttest_ind(_signed_errors(distorted), _signed_errors(ideal), equal_var=False)

    assert distorted_result.aggregate_cost_gap > ideal_result.aggregate_cost_gap
    assert welch.pvalue < 0.01


def test_reliable_ensemble_diagnostics(temperature_bench):
    _, views = temperature_bench

    (lead,) = summarize(views["ideal"], bins=20, seed=0).leads

    assert 0.95 <= lead.ssr <= 1.05
    assert lead.pit_pvalue > 0.01


def test_overconfident_ensemble_diagnostics(temperature_bench):
    _, views = temperature_bench

    (lead,) = summarize(views["dispersed"], bins=20, seed=0).leads
    counts = np.array(lead.pit_histogram)
    ends = int(counts[0] + counts[-1])

    assert lead.ssr == pytest.approx(0.5, abs=0.05)
    # U-shaped histogram: the two outer bins hold far more than 2/20 of the cases
    assert stats.binomtest(ends, int(counts.sum()), 2 / 20, alternative="greater").pvalue < 0.01


def test_cold_tail_distortion_hurts_frost_more_than_heat(temperature_bench):
    _, views = temperature_bench
    # both cost ramps sit 1.5 °C from the climate mean, on opposite sides
    tasks = {
        "frost": frost_cost(FrostTaskParams(theta=-1.5, cost_ratio_c=0.5)),
        "heat": heat_cost(HeatTaskParams(theta=4.5, cost_ratio_c=0.5)),
    }

    degradation = {}
    for name, cost in tasks.items():
        (ideal,) = aggregate(evaluate(views["ideal"], cost, kelvin_to_celsius))
        (shifted,) = aggregate(evaluate(views["shifted_tail"], cost, kelvin_to_celsius))
        degradation[name] = (shifted.mean_cost_gap - ideal.mean_cost_gap) / ideal.mean_cost_gap

    assert degradation["frost"] > degradation["heat"]
    assert degradation["frost"] > 0.0


@pytest.mark.parametrize("u_pen", [2.0, 4.0])
def test_wind_dispatch_follows_newsvendor_quantile(wind_view, u_pen):
    cost = wind_cost(WindTaskParams(u_pen=u_pen))
    power = np.round(wind_power(wind_view.members), 1)
    bins = np.array(WIND_POWER_BINS)
    m = power.shape[1]

    costs = expected_costs(power, cost)
    best_delivery = 1 + np.argmin(costs[:, 1:], axis=1)
    bayes = np.argmin(costs, axis=1)

    below = (power[:, :, None] < bins[None, None, :]).sum(axis=1)
    at_or_below = (power[:, :, None] <= bins[None, None, :]).sum(axis=1)
    # two neighbouring promises tie when P(Y <= p) hits 1/u_pen exactly
    tied = np.any(at_or_below[:, :-1] * u_pen == m, axis=1)
    admissible = below * u_pen < m
    rule = np.where(admissible.any(axis=1), 1 + np.where(admissible, np.arange(len(bins)), -1).max(axis=1), 1)

    assert (~tied).mean() > 0.5
    np.testing.assert_array_equal(best_delivery[~tied], rule[~tied])
    delivering = (bayes > 0) & ~tied
    np.testing.assert_array_equal(bayes[delivering], rule[delivering])


def test_wind_standby_has_zero_gap(wind_view):
    records = evaluate(wind_view, wind_cost(WindTaskParams(u_pen=2.0)), wind_power)
    standby = [r for r in records if r.chosen_action == 0]

    assert standby
    assert all(r.cost_gap == 0.0 for r in standby)
