import numpy as np
import pandas as pd
import pytest

from decision_calibration.errors import (
    AlignmentError,
    CoverageError,
    EmptyMaskError,
    IoError,
    SchemaError,
    ValidationError,
)
from decision_calibration.grid_store import (
    EnsembleDataset,
    GridSpec,
    ObservationDataset,
    RegionMask,
    Variable,
    align,
    load_ensemble,
    load_mask,
    load_observations,
    write_ensemble,
    write_mask,
    write_observations,
)


def _ensemble_rows(lats=(50.0, 48.5), lons=(0.0, 1.5), members=2, value=280.0):
    rows = []
    for lat in lats:
        for lon in lons:
            for m in range(members):
                rows.append({
                    "init_time": "2021-01-01T00:00:00Z", "lead_hours": 24,
                    "lat": lat, "lon": lon, "member": m, "value": value + m,
                })
    return pd.DataFrame(rows)


def test_load_ensemble_minimal_csv(tmp_path):
    path = tmp_path / "ens.csv"
    _ensemble_rows().to_csv(path, index=False)

    ens = load_ensemble(path)

    assert ens.values.shape == (1, 1, 2, 2, 2)
    assert ens.members == 2
    assert ens.grid.lats == (50.0, 48.5)
    assert ens.lead_hours == (24,)
    assert ens.init_times[0] == pd.Timestamp("2021-01-01", tz="UTC")


def test_load_ensemble_missing_member_column(tmp_path):
    path = tmp_path / "ens.csv"
    _ensemble_rows().drop(columns="member").to_csv(path, index=False)

    with pytest.raises(SchemaError, match="member"):
        load_ensemble(path)


def test_load_ensemble_negative_wind(tmp_path):
    path = tmp_path / "wind.csv"
    frame = _ensemble_rows(value=4.0)
    frame.loc[3, "value"] = -0.5
    frame.to_csv(path, index=False)

    with pytest.raises(ValidationError):
        load_ensemble(path, variable=Variable.WIND_SPEED_10M)


def test_load_ensemble_missing_cell(tmp_path):
    path = tmp_path / "ens.csv"
    _ensemble_rows().iloc[:-1].to_csv(path, index=False)

    with pytest.raises(SchemaError, match="no row"):
        load_ensemble(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_ensemble(tmp_path / "absent.csv")
    with pytest.raises(IoError):
        load_observations(tmp_path / "absent.bin", schema="binary")


def test_load_observations_single_row_grid(tmp_path):
    path = tmp_path / "obs.csv"
    pd.DataFrame({
        "valid_time": ["2021-01-02T00:00:00Z"] * 3,
        "lat": [50.0] * 3,
        "lon": [0.0, 1.5, 3.0],
        "value": [280.0, 281.0, 282.0],
    }).to_csv(path, index=False)

    obs = load_observations(path)

    assert obs.values.shape == (1, 1, 3)
    np.testing.assert_array_equal(obs.values[0, 0], [280.0, 281.0, 282.0])


def test_load_observations_duplicate_row(tmp_path):
    path = tmp_path / "obs.csv"
    pd.DataFrame({
        "valid_time": ["2021-01-02T00:00:00Z"] * 4,
        "lat": [50.0] * 4,
        "lon": [0.0, 1.5, 3.0, 3.0],
        "value": [280.0, 281.0, 282.0, 283.0],
    }).to_csv(path, index=False)

    with pytest.raises(SchemaError, match="duplicate"):
        load_observations(path)


def test_load_observations_declared_grid_mismatch(tmp_path):
    path = tmp_path / "obs.csv"
    pd.DataFrame({
        "valid_time": ["2021-01-02T00:00:00Z"] * 3,
        "lat": [50.0] * 3,
        "lon": [0.0, 1.5, 3.0],
        "value": [280.0, 281.0, 282.0],
    }).to_csv(path, index=False)
    declared = GridSpec.from_coords([50.0], [0.0, 1.5, 3.0, 4.5])

    with pytest.raises(ValidationError):
        load_observations(path, grid=declared)


def test_grid_straddling_greenwich():
    grid = GridSpec.from_coords([50.0], [-1.5, 0.0, 1.5])

    assert grid.lons == (358.5, 0.0, 1.5)
    assert grid.locate(50.0, -1.5) == (0, 0)
    assert grid.locate(50.0, 1.5) == (0, 2)


def test_grid_rejects_irregular_steps():
    with pytest.raises(ValidationError):
        GridSpec(lats=(50.0, 48.5, 46.0), lons=(0.0,), resolution_deg=1.5)


def test_load_mask_points(tmp_path, grid_2x3):
    path = tmp_path / "mask.csv"
    pd.DataFrame({"lat": [51.0, 49.5, 49.5], "lon": [0.0, 1.5, 3.0]}).to_csv(path, index=False)

    mask = load_mask(path, grid_2x3)

    assert mask.count == 3
    assert mask.name == "mask"
    assert mask.included.tolist() == [[True, False, False], [False, True, True]]


def test_load_mask_boolean_grid(tmp_path, grid_2x3):
    path = tmp_path / "region.csv"
    pd.DataFrame({
        "lat": [51.0, 51.0, 49.5],
        "lon": [0.0, 1.5, 0.0],
        "included": [True, False, 1],
    }).to_csv(path, index=False)

    assert load_mask(path, grid_2x3).count == 2


def test_load_mask_off_grid_point(tmp_path, grid_2x3):
    path = tmp_path / "mask.csv"
    pd.DataFrame({"lat": [51.1], "lon": [0.0]}).to_csv(path, index=False)

    with pytest.raises(AlignmentError, match="51.1"):
        load_mask(path, grid_2x3)


def test_load_mask_empty(tmp_path, grid_2x3):
    header_only = tmp_path / "header.csv"
    header_only.write_text("lat,lon\n")
    blank = tmp_path / "blank.csv"
    blank.write_text("")

    with pytest.raises(EmptyMaskError):
        load_mask(header_only, grid_2x3)
    with pytest.raises(EmptyMaskError):
        load_mask(blank, grid_2x3)


def test_region_mask_needs_a_point(grid_2x3):
    with pytest.raises(EmptyMaskError):
        RegionMask(grid_2x3, np.zeros(grid_2x3.shape, dtype=bool))


def test_align_counts_cases(make_datasets, grid_2x3):
    ens, obs = make_datasets(n_init=2, leads=(24, 48))
    included = np.zeros(grid_2x3.shape, dtype=bool)
    included[0, :] = True
    mask = RegionMask(grid_2x3, included, "north")

    view = align(ens, obs, mask)

    assert len(view) == 2 * 2 * 3
    assert set(zip(view.lats, view.lons)) == {(51.0, 0.0), (51.0, 1.5), (51.0, 3.0)}
    assert view.leads == [24, 48]


def test_align_single_point_mask(make_datasets, grid_2x3):
    ens, obs = make_datasets(n_init=3, leads=(24, 48))
    included = np.zeros(grid_2x3.shape, dtype=bool)
    included[1, 2] = True

    view = align(ens, obs, RegionMask(grid_2x3, included))

    assert len(view) == 3 * 2
    assert np.all(view.lats == 49.5)
    assert np.all(view.lons == 3.0)


def test_align_pairs_valid_times(make_datasets):
    ens, obs = make_datasets(n_init=2, leads=(24, 48))

    view = align(ens, obs)

    for case in view:
        valid = case.init_time + pd.Timedelta(hours=case.lead_hours)
        t = obs.valid_times.get_loc(valid)
        i, j = obs.grid.locate(case.lat, case.lon)
        assert case.observed == obs.values[t, i, j]


def test_align_lead_selection(make_datasets):
    ens, obs = make_datasets(n_init=2, leads=(24, 48))

    view = align(ens, obs, lead_hours=[48])

    assert view.leads == [48]
    assert len(view) == 2 * 6
    with pytest.raises(ValidationError):
        align(ens, obs, lead_hours=[72])


def test_align_missing_valid_time(make_datasets):
    ens, obs = make_datasets(n_init=2, leads=(24, 48))
    last = len(obs.valid_times) - 1
    truncated = ObservationDataset(obs.variable, obs.valid_times[:last], obs.grid, obs.values[:last])

    with pytest.raises(CoverageError) as err:
        align(ens, truncated)

    assert err.value.missing == [(ens.init_times[1], 48)]
    assert "2021-01-02T00:00Z" in str(err.value)


def test_align_variable_mismatch(make_datasets):
    ens, _ = make_datasets()
    _, wind_obs = make_datasets(variable=Variable.WIND_SPEED_10M)

    with pytest.raises(ValidationError):
        align(ens, wind_obs)


def test_csv_round_trip(tmp_path, make_datasets):
    ens, obs = make_datasets(n_init=2, leads=(24, 72), members=4)

    write_ensemble(ens, tmp_path / "ens.csv")
    write_observations(obs, tmp_path / "obs.csv")
    ens_back = load_ensemble(tmp_path / "ens.csv")
    obs_back = load_observations(tmp_path / "obs.csv")

    np.testing.assert_array_equal(ens_back.values, ens.values)
    np.testing.assert_array_equal(obs_back.values, obs.values)
    assert ens_back.lead_hours == ens.lead_hours
    assert ens_back.init_times.equals(ens.init_times)
    assert obs_back.valid_times.equals(obs.valid_times)


def test_binary_round_trip_is_stable(tmp_path, make_datasets):
    ens, obs = make_datasets(variable=Variable.WIND_SPEED_10M)

    write_ensemble(ens, tmp_path / "a.bin", "binary")
    first = load_ensemble(tmp_path / "a.bin", "binary")
    write_ensemble(first, tmp_path / "b.bin", "binary")
    write_observations(obs, tmp_path / "obs.bin", "binary")
    obs_back = load_observations(tmp_path / "obs.bin", "binary")

    assert first.variable is Variable.WIND_SPEED_10M
    np.testing.assert_array_equal(first.values, ens.values.astype(np.float32).astype(np.float64))
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    np.testing.assert_array_equal(obs_back.values, obs.values.astype(np.float32).astype(np.float64))
    assert obs_back.valid_times.equals(obs.valid_times)


def test_binary_variable_mismatch(tmp_path, make_datasets):
    ens, _ = make_datasets(variable=Variable.WIND_SPEED_10M)
    write_ensemble(ens, tmp_path / "ens.bin", "binary")

    with pytest.raises(ValidationError):
        load_ensemble(tmp_path / "ens.bin", "binary", Variable.TEMPERATURE_2M)


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + bytes(40))

    with pytest.raises(SchemaError, match="magic"):
        load_ensemble(path, "binary")


def test_binary_four_field_header_is_rejected(tmp_path, make_datasets):
    ens, _ = make_datasets()
    payload = write_ensemble(ens, tmp_path / "ens.bin", "binary").read_bytes()
    # drop the member count and variable code that follow the four axis sizes
    short = tmp_path / "short.bin"
    short.write_bytes(payload[:20] + payload[28:])

    with pytest.raises(SchemaError):
        load_ensemble(short, "binary")


def test_mask_round_trip(tmp_path, grid_2x3):
    included = np.array([[True, False, True], [False, False, True]])
    mask = RegionMask(grid_2x3, included, "corners")

    back = load_mask(write_mask(mask, tmp_path / "corners.csv"), grid_2x3)

    np.testing.assert_array_equal(back.included, included)


def test_ensemble_dataset_rejects_bad_lead(grid_2x3):
    values = np.zeros((1, 1, *grid_2x3.shape, 2))
    with pytest.raises(ValidationError):
        EnsembleDataset(Variable.TEMPERATURE_2M, pd.DatetimeIndex(["2021-01-01"]), (12,), grid_2x3, values)
