"""Triplet/grid data handling: binning, standardization, windows, files."""

import numpy as np
import pytest

from clinicast import data as dm
from clinicast.data import (
    Observation,
    SparseSeries,
    StandardizationStats,
    VariableCatalog,
    bin_to_grid,
    destandardize,
    sliding_windows,
    split_patients,
    standardize,
    window_starts,
)
from clinicast.errors import CatalogError, DataError

CAT = VariableCatalog(["HR", "SBP"], ["Age"])


def series(obs, pid="p0", statics=None):
    return SparseSeries(pid, obs, statics or {"Age": 60.0})


def test_first_observed_value_wins():
    s = series([Observation(0.2, "HR", 80.0), Observation(0.9, "HR", 90.0)])
    grid = bin_to_grid(s, CAT)
    assert grid.values[0, CAT.index("HR")] == 80.0
    assert grid.mask[0, CAT.index("HR")] == 1.0
    assert grid.discarded == 1


def test_unobserved_cells_are_zero_with_mask_zero():
    s = series([Observation(0.5, "HR", 1.5)])
    grid = bin_to_grid(s, CAT, hours=2)
    assert grid.values[1, CAT.index("HR")] == 0.0
    assert grid.mask[1, CAT.index("HR")] == 0.0
    assert grid.mask[0, CAT.index("SBP")] == 0.0


def test_tie_within_hour_keeps_ingestion_order():
    s = series([Observation(1.0, "HR", 70.0), Observation(1.0, "HR", 75.0)])
    grid = bin_to_grid(s, CAT)
    assert grid.values[1, CAT.index("HR")] == 70.0


def test_integer_hour_boundary_goes_to_that_bucket():
    s = series([Observation(2.0, "HR", 64.0)])
    grid = bin_to_grid(s, CAT)
    assert grid.hours == 3
    assert grid.values[2, CAT.index("HR")] == 64.0


def test_grid_reconstruction_recovers_first_per_hour_subset():
    rng = np.random.default_rng(4)
    obs = [
        Observation(float(rng.uniform(0, 30)), rng.choice(["HR", "SBP"]), float(rng.normal()))
        for _ in range(300)
    ]
    s = series(obs)
    grid = bin_to_grid(s, CAT)
    # brute-force scan: first observation per (hour, variable)
    expected = {}
    for o in sorted(obs, key=lambda o: o.t):
        key = (int(o.t), o.f)
        expected.setdefault(key, o.v)
    for (hour, name), value in expected.items():
        col = CAT.index(name)
        assert grid.mask[hour, col] == 1.0
        assert grid.values[hour, col] == value
    assert grid.mask.sum() == len(expected)
    assert grid.discarded == len(obs) - len(expected)


def test_binning_idempotent_in_effect():
    rng = np.random.default_rng(9)
    obs = [
        Observation(float(rng.uniform(0, 20)), "HR", float(rng.normal()))
        for _ in range(60)
    ]
    s = series(obs)
    grid = bin_to_grid(s, CAT)
    rebuilt = [
        Observation(float(h), name, grid.values[h, CAT.index(name)])
        for h in range(grid.hours)
        for name in CAT.dynamic
        if grid.mask[h, CAT.index(name)]
    ]
    again = bin_to_grid(series(rebuilt), CAT, hours=grid.hours)
    assert np.array_equal(again.values, grid.values)
    assert np.array_equal(again.mask, grid.mask)


def test_standardize_examples():
    stats = StandardizationStats({"HR": 10.0, "SBP": 0.0, "Age": 0.0},
                                 {"HR": 2.0, "SBP": 1.0, "Age": 1.0})
    s = series([Observation(0.0, "HR", 14.0), Observation(1.0, "HR", 10.0)])
    out = standardize(s, stats)
    assert out.observations[0].v == 2.0
    assert out.observations[1].v == 0.0


def test_standardize_roundtrip():
    rng = np.random.default_rng(12)
    raw = series(
        [Observation(float(rng.uniform(0, 5)), "HR", float(rng.normal(80, 9)))
         for _ in range(50)]
    )
    stats = StandardizationStats.fit([raw], CAT)
    back = destandardize(standardize(raw, stats), stats)
    for a, b in zip(raw.observations, back.observations):
        assert abs(a.v - b.v) <= 1e-12


def test_degenerate_variables_get_unit_std():
    s = series([Observation(0.0, "HR", 5.0), Observation(1.0, "HR", 5.0)])
    stats = StandardizationStats.fit([s], CAT)
    assert stats.stds["HR"] == 1.0
    assert "HR" in stats.degenerate
    assert "SBP" in stats.degenerate  # never observed


def test_unknown_variable_rejected():
    stats = StandardizationStats.fit([series([Observation(0.0, "HR", 1.0)])], CAT)
    with pytest.raises(CatalogError):
        stats.transform_value("Lactate", 1.0)
    with pytest.raises(CatalogError):
        CAT.index("Lactate")


@pytest.mark.parametrize(
    "span,expected_starts",
    [
        (47.9, []),
        (48.0, [0]),
        (60.0, [0, 4, 8, 12]),
        (200.0, [4 * k for k in range(19)]),  # capped at start 72
    ],
)
def test_window_starts(span, expected_starts):
    assert window_starts(span) == expected_starts
    formula = max(0, int((min(span, 120) - 48) // 4) + 1) if span >= 48 else 0
    assert len(expected_starts) == formula


def test_sliding_windows_contiguous_and_relative():
    rng = np.random.default_rng(3)
    obs = [Observation(float(t), "HR", float(rng.normal())) for t in range(0, 53)]
    s = series(obs)
    windows = sliding_windows(s, CAT)
    assert len(windows) == 2  # starts 0 and 4 (span 52)
    w = windows[1]
    assert w.start == 4
    assert w.obs_values.shape == (24, 2)
    assert w.target_values.shape == (24, 2)
    # window-relative triplet times in [0, 24)
    assert all(0.0 <= o.t < 24.0 for o in w.obs_triplets)
    # target picks up exactly hours 28..51
    col = CAT.index("HR")
    assert w.target_mask[:, col].sum() == 24


def test_split_patients_disjoint_and_deterministic():
    cohort = [series([Observation(0.0, "HR", 1.0)], pid=f"p{i}") for i in range(50)]
    a = split_patients(cohort, (0.64, 0.16, 0.20), seed=7)
    b = split_patients(cohort, (0.64, 0.16, 0.20), seed=7)
    ids = [{s.patient_id for s in part} for part in a]
    assert ids[0] | ids[1] | ids[2] == {f"p{i}" for i in range(50)}
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    for part_a, part_b in zip(a, b):
        assert [s.patient_id for s in part_a] == [s.patient_id for s in part_b]
    with pytest.raises(DataError):
        split_patients(cohort, (0.5, 0.2, 0.2), seed=1)


def test_file_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    cohort = [
        series(
            [Observation(float(rng.uniform(0, 9)), "HR", float(rng.normal()))
             for _ in range(5)],
            pid=f"p{i}",
            statics={"Age": float(40 + i)},
        )
        for i in range(4)
    ]
    obs_path = tmp_path / "observations.csv"
    statics_path = tmp_path / "statics.csv"
    dm.write_observations(obs_path, cohort)
    dm.write_statics(statics_path, cohort)
    loaded = dm.read_series(obs_path, statics_path)
    assert [s.patient_id for s in loaded] == [s.patient_id for s in cohort]
    for before, after in zip(cohort, loaded):
        assert after.statics == before.statics
        assert [(o.t, o.f, o.v) for o in after.observations] == [
            (o.t, o.f, o.v) for o in before.observations
        ]


def test_negative_time_rejected():
    with pytest.raises(DataError):
        series([Observation(-0.1, "HR", 1.0)])


def test_catalog_duplicate_names_rejected():
    with pytest.raises(CatalogError):
        VariableCatalog(["HR", "HR"])
