"""Synthetic cohort generator: determinism, sparsity, planted couplings."""

import dataclasses

import numpy as np
import pytest

from clinicast.data import bin_to_grid
from clinicast.errors import ConfigError
from clinicast.synth import (
    CouplingSpec,
    GeneratorConfig,
    VariableSpec,
    default_variable_specs,
    generate_cohort,
    parse_couplings,
)


def small_config(**kwargs):
    return GeneratorConfig(n_patients=kwargs.pop("n_patients", 30), **kwargs)


def test_deterministic_for_a_seed():
    a = generate_cohort(small_config(), seed=5)
    b = generate_cohort(small_config(), seed=5)
    assert len(a.series) == len(b.series)
    for sa, sb in zip(a.series, b.series):
        assert sa.patient_id == sb.patient_id
        assert [(o.t, o.f, o.v) for o in sa.observations] == [
            (o.t, o.f, o.v) for o in sb.observations
        ]
    c = generate_cohort(small_config(), seed=6)
    assert [(o.t, o.f, o.v) for o in c.series[0].observations] != [
        (o.t, o.f, o.v) for o in a.series[0].observations
    ]


def test_sampling_rate_above_resolution_rejected():
    specs = [dataclasses.replace(default_variable_specs()[0], sampling_rate=1.5)]
    with pytest.raises(ConfigError):
        GeneratorConfig(variables=specs)


def test_unknown_coupling_variable_rejected():
    with pytest.raises(ConfigError):
        GeneratorConfig(couplings=[CouplingSpec("NoSuchDrug", "HR", 1.0, 2.0)])


def test_missingness_matches_configured_rate():
    # grid missingness of a 5%-sampled variable lands within +-2pp
    specs = [
        dataclasses.replace(spec, sampling_rate=0.05)
        if spec.name == "Platelets"
        else spec
        for spec in default_variable_specs()
    ]
    cohort = generate_cohort(
        GeneratorConfig(n_patients=1000, variables=specs), seed=11
    )
    catalog = cohort.catalog
    col = catalog.index("Platelets")
    observed = hours = 0
    for series in cohort.series:
        grid = bin_to_grid(series, catalog, hours=48)
        observed += int(grid.mask[:, col].sum())
        hours += 48
    missingness = 1.0 - observed / hours
    assert 0.93 <= missingness <= 0.97


def test_planted_coupling_separates_dose_groups():
    coupling = CouplingSpec("Dopamine", "HR", lag_hours=1.0, effect_sd=2.0)
    cohort = generate_cohort(
        GeneratorConfig(n_patients=400, couplings=[coupling]), seed=3
    )
    catalog = cohort.catalog
    hr_col, dop_col = catalog.index("HR"), catalog.index("Dopamine")
    doses, hr_means = [], []
    for series in cohort.series:
        grid = bin_to_grid(series, catalog, hours=48)
        hr_mask = grid.mask[:, hr_col].astype(bool)
        dop_mask = grid.mask[:, dop_col].astype(bool)
        if not hr_mask.any():
            continue
        dose = grid.values[dop_mask, dop_col].mean() if dop_mask.any() else 0.0
        doses.append(dose)
        hr_means.append(grid.values[hr_mask, hr_col].mean())
    doses = np.asarray(doses)
    hr_means = np.asarray(hr_means)
    median = np.median(doses)
    high = hr_means[doses > median]
    low = hr_means[doses <= median]
    hr_sd = next(s.between_sd for s in cohort.config.variables if s.name == "HR")
    assert high.mean() - low.mean() > 1.0 * hr_sd


def test_zero_noise_and_zero_coupling_is_exact():
    cohort = generate_cohort(
        GeneratorConfig(n_patients=10, noise_scale=0.0), seed=2
    )
    event_names = {s.name for s in cohort.config.variables if s.kind == "event"}
    checked = 0
    for idx, series in enumerate(cohort.series):
        for obs in series.observations:
            if obs.f in event_names:
                continue
            assert obs.v == cohort.latent(idx, obs.f, obs.t)
            checked += 1
    assert checked > 100


def test_manifest_documents_ground_truth():
    coupling = CouplingSpec("Dobutamine", "WBC", 2.0, -1.5)
    cohort = generate_cohort(
        GeneratorConfig(n_patients=5, couplings=[coupling]), seed=1
    )
    manifest = cohort.manifest()
    assert manifest["seed"] == 1
    assert manifest["couplings"] == [
        {"drug": "Dobutamine", "target": "WBC", "lag_hours": 2.0, "effect_sd": -1.5}
    ]
    entry = next(v for v in manifest["variables"] if v["name"] == "Platelets")
    assert entry["missingness"] == pytest.approx(0.92)
    assert manifest["statics"] == ["Age", "Gender"]


def test_parse_couplings():
    parsed = parse_couplings("Dopamine:HR:1:2.0; Dobutamine:WBC:2:-1.5")
    assert parsed == [
        CouplingSpec("Dopamine", "HR", 1.0, 2.0),
        CouplingSpec("Dobutamine", "WBC", 2.0, -1.5),
    ]
    with pytest.raises(ConfigError):
        parse_couplings("Dopamine:HR:1")


def test_infected_patients_carry_proxy_events():
    cohort = generate_cohort(GeneratorConfig(n_patients=60, infection_rate=0.5), seed=4)
    infected = [i for i, p in enumerate(cohort.params) if p.infected]
    assert infected, "expected some infected patients at rate 0.5"
    for idx in infected:
        names = {o.f for o in cohort.series[idx].observations}
        assert "Antibiotic" in names and "BloodCulture" in names
    clean = [i for i, p in enumerate(cohort.params) if not p.infected]
    for idx in clean:
        names = {o.f for o in cohort.series[idx].observations}
        assert "Antibiotic" not in names and "BloodCulture" not in names


def test_custom_catalog_roles_resolve():
    catalog = GeneratorConfig().catalog()
    assert catalog.column_for_role("sofa:platelets") == catalog.index("Platelets")
    assert catalog.column_for_role("infection:antibiotic") == catalog.index("Antibiotic")
    assert catalog.column_for_role("mv") == catalog.index("MechVent")
