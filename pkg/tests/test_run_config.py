import pytest
import yaml

from decision_calibration.errors import ConfigError, ParamError
from decision_calibration.grid_store import Variable
from decision_calibration.run_config import (
    SynthConfig,
    comparison_key,
    config_hash,
    configure_logging,
    load_run_config,
    load_synth_config,
)

BASE = {
    "ensemble": "data/ensemble.csv",
    "observations": "data/observations.csv",
    "task": "frost",
    "theta": [0, 2],
    "cost_ratio": [0.3, 0.5],
    "leads_days": [1, 3],
}


def _write(tmp_path, name="run.yaml", **values):
    path = tmp_path / name
    path.write_text(yaml.safe_dump({**BASE, **values}, sort_keys=False))
    return path


def test_load_run_config(tmp_path):
    config = load_run_config(_write(tmp_path, cost_ratio=0.5))

    assert config.cost_ratio == [0.5]
    assert config.lead_hours == [24, 72]
    assert config.ensemble == (tmp_path / "data" / "ensemble.csv").resolve()
    assert config.data_schema == "csv"
    assert config.task_variable is Variable.TEMPERATURE_2M


def test_combos_cross_product_in_config_order(tmp_path):
    config = load_run_config(_write(tmp_path))

    assert config.combos() == [
        {"theta": 0, "cost_ratio": 0.3},
        {"theta": 0, "cost_ratio": 0.5},
        {"theta": 2, "cost_ratio": 0.3},
        {"theta": 2, "cost_ratio": 0.5},
    ]
    assert [t.label for t in config.tasks()][1] == "frost(theta=0, cost_ratio=0.5)"


def test_wind_config(tmp_path):
    config = load_run_config(_write(tmp_path, task="wind", theta=None, cost_ratio=None, u_pen=[2, 4], schema="binary"))

    assert config.data_schema == "binary"
    assert len(config.tasks()) == 2
    assert config.task_variable is Variable.WIND_SPEED_10M


def test_overrides_win_over_file(tmp_path):
    config = load_run_config(_write(tmp_path, seed=1), {"seed": 7, "threads": None, "output_dir": tmp_path / "o"})

    assert config.seed == 7
    assert config.output_dir == tmp_path / "o"
    assert config.threads >= 1


def test_environment_defaults(tmp_path, monkeypatch):
    monkeypatch.setenv("DECAL_THREADS", "3")
    monkeypatch.setenv("DECAL_OUTPUT_DIR", str(tmp_path / "reports"))

    config = load_run_config(_write(tmp_path))

    assert config.threads == 3
    assert str(config.output_dir) == str(tmp_path / "reports")


@pytest.mark.parametrize(
    "values",
    [
        {"task": "wind", "u_pen": 1.0},
        {"task": "wind"},
        {"theta": None},
        {"cost_ratio": 1.2},
        {"leads_days": [1, 16]},
        {"variable": "wind_speed_10m"},
    ],
    ids=["u_pen_one", "wind_without_u_pen", "frost_without_theta", "cost_ratio", "lead_too_long", "variable"],
)
def test_invalid_parameters(tmp_path, values):
    with pytest.raises(ParamError):
        load_run_config(_write(tmp_path, **values))


def test_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="colour"):
        load_run_config(_write(tmp_path, colour="blue"))


def test_wrong_type(tmp_path):
    with pytest.raises(ConfigError, match="pit_bins"):
        load_run_config(_write(tmp_path, pit_bins=1))


def test_unreadable_config(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("task: [frost\n")
    listing = tmp_path / "list.yaml"
    listing.write_text("- frost\n- heat\n")

    with pytest.raises(ConfigError):
        load_run_config(broken)
    with pytest.raises(ConfigError):
        load_run_config(listing)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.yaml")


def test_config_hash_ignores_run_plumbing(tmp_path):
    base = load_run_config(_write(tmp_path, "a.yaml"))
    threads = load_run_config(_write(tmp_path, "b.yaml", threads=4, output_dir="elsewhere", format="json"))
    theta = load_run_config(_write(tmp_path, "c.yaml", theta=[0, 3]))

    assert config_hash(base) == config_hash(threads)
    assert config_hash(base) != config_hash(theta)
    assert len(config_hash(base)) == 64


def test_config_hash_ignores_key_order(tmp_path):
    reordered = tmp_path / "reordered.yaml"
    reordered.write_text(yaml.safe_dump(dict(reversed(list(BASE.items()))), sort_keys=False))

    assert config_hash(load_run_config(reordered)) == config_hash(load_run_config(_write(tmp_path)))


def test_comparison_key_ignores_inputs(tmp_path):
    ideal = load_run_config(_write(tmp_path, "a.yaml"))
    other = load_run_config(_write(tmp_path, "b.yaml", ensemble="data/other.csv", seed=9))

    assert comparison_key(ideal) == comparison_key(other)
    assert config_hash(ideal) != config_hash(other)


def test_synth_config(tmp_path):
    path = tmp_path / "synth.yaml"
    path.write_text(yaml.safe_dump({
        "lat_start": 51.0, "lat_stop": 48.0, "lon_start": 0.0, "lon_stop": 3.0,
        "forecasters": ["ideal", "dispersed"], "spread": 0.7, "leads_days": 2, "output_dir": "synthetic",
    }))

    config = load_synth_config(path)

    assert config.grid().shape == (3, 3)
    assert config.lead_hours == [48]
    assert config.specs()["dispersed"].spread == 0.7
    assert config.output_dir == (tmp_path / "synthetic").resolve()


def test_synth_config_validation():
    with pytest.raises(ParamError):
        SynthConfig(forecasters=["ideal", "ideal"])
    with pytest.raises(ParamError):
        SynthConfig(sigma_base=0.0)
    with pytest.raises(ParamError):
        SynthConfig(forecasters=[])


def test_configure_logging_rejects_unknown_level():
    with pytest.raises(ConfigError):
        configure_logging("LOUD")
