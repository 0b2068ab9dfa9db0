"""Synthetic sparse clinical cohorts with known ground truth.

Each patient gets a closed-form latent trajectory per variable (damped
patient-specific sinusoid around a patient baseline, plus a severity-driven
deterioration ramp and optional drug couplings).  Observation times are
Bernoulli-thinned per hour and variable, so a configured sampling rate of
``r`` yields grid missingness of ``1 - r`` by construction.  Observation
noise is additive on top of the latent value; with noise disabled the
emitted values equal the closed form exactly.

Drug dose trajectories are piecewise constant with one level change at a
patient-specific hour, and a coupling shifts its target variable by
``effect_sd`` standard deviations per unit of standardized dose, after a
configurable lag.  All planted couplings are recorded in the manifest so
ablation studies can be checked against ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Observation, SparseSeries, VariableCatalog
from .errors import ConfigError

RAMP_START = 20.0
RAMP_LENGTH = 28.0


@dataclass(frozen=True)
class VariableSpec:
    name: str
    baseline: float = 0.0
    between_sd: float = 1.0
    amplitude: float = 0.0
    period: float = 24.0
    noise_sd: float = 0.0
    sampling_rate: float = 0.5
    roles: tuple = ()
    kind: str = "continuous"  # continuous | dose | event
    deterioration: float = 0.0  # signed shift at full severity, raw units
    lo: float = -math.inf
    hi: float = math.inf
    admin_prob: float = 0.0  # dose kind: fraction of patients on the drug


@dataclass(frozen=True)
class CouplingSpec:
    drug: str
    target: str
    lag_hours: float
    effect_sd: float  # target shift in units of its between-patient sd,
    # per unit of standardized drug dose


# name, roles, baseline, sd, amp, period, noise, rate, deterioration, lo, hi
_CONTINUOUS = [
    ("HR", ("saps:hr",), 85.0, 10.0, 8.0, 16.0, 3.0, 0.70, 25.0, 30.0, 200.0),
    ("SBP", ("sofa:sbp", "saps:sbp"), 120.0, 12.0, 10.0, 20.0, 4.0, 0.70, -35.0, 40.0, 220.0),
    ("DBP", ("sofa:dbp",), 70.0, 8.0, 6.0, 20.0, 3.0, 0.70, -20.0, 20.0, 140.0),
    ("RR", (), 17.0, 3.0, 3.0, 12.0, 1.5, 0.60, 8.0, 5.0, 50.0),
    ("O2Sat", (), 96.5, 1.5, 1.0, 18.0, 0.8, 0.60, -6.0, 60.0, 100.0),
    ("Temp", ("saps:temp",), 37.0, 0.4, 0.5, 24.0, 0.2, 0.35, 2.5, 33.0, 42.0),
    ("FiO2", ("sofa:fio2",), 0.35, 0.10, 0.03, 30.0, 0.02, 0.25, 0.30, 0.21, 1.0),
    ("PaO2", ("sofa:pao2",), 95.0, 12.0, 6.0, 30.0, 4.0, 0.15, -40.0, 30.0, 500.0),
    ("Platelets", ("sofa:platelets",), 220.0, 60.0, 10.0, 48.0, 8.0, 0.08, -180.0, 5.0, 900.0),
    ("Bilirubin", ("sofa:bilirubin",), 0.8, 0.3, 0.1, 48.0, 0.1, 0.06, 9.0, 0.1, 40.0),
    ("Creatinine", ("sofa:creatinine",), 1.0, 0.3, 0.08, 48.0, 0.08, 0.08, 3.5, 0.2, 15.0),
    ("Urine", ("sofa:urine",), 55.0, 15.0, 10.0, 12.0, 6.0, 0.50, -45.0, 0.0, 400.0),
    ("GCS_eye", ("sofa:gcs_eye",), 3.9, 0.2, 0.05, 48.0, 0.1, 0.25, -2.5, 1.0, 4.0),
    ("GCS_motor", ("sofa:gcs_motor",), 5.8, 0.3, 0.05, 48.0, 0.1, 0.25, -4.0, 1.0, 6.0),
    ("GCS_verbal", ("sofa:gcs_verbal",), 4.7, 0.4, 0.05, 48.0, 0.1, 0.25, -3.2, 1.0, 5.0),
    ("BUN", ("saps:bun",), 20.0, 8.0, 2.0, 48.0, 2.0, 0.07, 60.0, 2.0, 200.0),
    ("Sodium", ("saps:sodium",), 139.0, 3.0, 1.0, 48.0, 1.0, 0.10, -10.0, 110.0, 175.0),
    ("Potassium", ("saps:potassium",), 4.1, 0.4, 0.15, 48.0, 0.15, 0.10, 1.6, 1.5, 9.0),
    ("Bicarbonate", ("saps:bicarbonate",), 24.0, 2.5, 0.8, 48.0, 0.8, 0.08, -9.0, 5.0, 45.0),
    ("WBC", ("saps:wbc",), 9.0, 2.5, 0.8, 48.0, 0.8, 0.08, 14.0, 0.1, 80.0),
]

# name, role, mean dose, dose sd, charting rate, admin prob
_DOSES = [
    ("Dopamine", "sofa:dopamine", 4.0, 3.0, 0.85, 0.35),
    ("Dobutamine", "sofa:dobutamine", 3.0, 2.0, 0.85, 0.25),
    ("Epinephrine", "sofa:epinephrine", 0.06, 0.05, 0.85, 0.15),
    ("Norepinephrine", "sofa:norepinephrine", 0.08, 0.06, 0.85, 0.30),
]

_EVENTS = [
    ("MechVent", "mv"),
    ("Antibiotic", "infection:antibiotic"),
    ("BloodCulture", "infection:culture"),
]


def default_variable_specs():
    specs = []
    for name, roles, base, sd, amp, period, noise, rate, det, lo, hi in _CONTINUOUS:
        specs.append(
            VariableSpec(
                name, base, sd, amp, period, noise, rate,
                roles=roles, deterioration=det, lo=lo, hi=hi,
            )
        )
    for name, role, base, sd, rate, admin in _DOSES:
        specs.append(
            VariableSpec(
                name, base, sd, 0.0, 24.0, 0.0, rate,
                roles=(role,), kind="dose", lo=0.0, admin_prob=admin,
            )
        )
    for name, role in _EVENTS:
        specs.append(VariableSpec(name, roles=(role,), kind="event"))
    return specs


@dataclass
class GeneratorConfig:
    n_patients: int = 100
    span_hours: float = 48.0
    noise_scale: float = 1.0
    infection_rate: float = 0.4
    infection_proxy: bool = True
    variables: list = field(default_factory=default_variable_specs)
    couplings: list = field(default_factory=list)

    def __post_init__(self):
        names = {spec.name for spec in self.variables}
        for spec in self.variables:
            if not 0.0 < spec.sampling_rate <= 1.0:
                raise ConfigError(
                    f"sampling rate {spec.sampling_rate} for {spec.name} exceeds the "
                    "one-observation-per-hour resolution"
                )
        for c in self.couplings:
            if c.drug not in names or c.target not in names:
                raise ConfigError(f"coupling references unknown variable: {c}")
            if c.lag_hours < 0:
                raise ConfigError(f"negative coupling lag: {c}")

    def catalog(self):
        roles = {s.name: s.roles for s in self.variables if s.roles}
        return VariableCatalog(
            [s.name for s in self.variables], ["Age", "Gender"], roles
        )


@dataclass
class PatientParams:
    severity: float
    infected: bool
    ventilated: bool
    baselines: dict
    phases: dict
    dose_levels: dict  # name -> (level_before, level_after, change_hour); absent if not administered
    statics: dict


def _ramp(t):
    return min(max((t - RAMP_START) / RAMP_LENGTH, 0.0), 1.0)


class SyntheticCohort:
    """Generated series plus the latent model that produced them."""

    def __init__(self, config, seed):
        self.config = config
        self.seed = int(seed)
        self.catalog = config.catalog()
        self._specs = {s.name: s for s in config.variables}
        self.params = []
        self.series = []
        self._generate()

    # -- latent model ------------------------------------------------------

    def latent(self, patient_index, name, t):
        """Closed-form latent value of a variable at time t for one patient."""
        spec = self._specs[name]
        p = self.params[patient_index]
        if spec.kind == "event":
            return 1.0
        if spec.kind == "dose":
            levels = p.dose_levels.get(name)
            if levels is None:
                return 0.0
            before, after, change = levels
            return before if t < change else after
        value = p.baselines[name]
        if spec.amplitude > 0.0:
            value += (
                spec.amplitude
                * p.phases[name][1]
                * math.sin(2.0 * math.pi * t / spec.period + p.phases[name][0])
            )
        value += spec.deterioration * p.severity * _ramp(t)
        for c in self.config.couplings:
            if c.target != name:
                continue
            drug = self._specs[c.drug]
            dose = self.latent(patient_index, c.drug, t - c.lag_hours) if t >= c.lag_hours else 0.0
            z = (dose - drug.baseline) / drug.between_sd
            value += c.effect_sd * spec.between_sd * z
        return min(max(value, spec.lo), spec.hi)

    # -- generation --------------------------------------------------------

    def _draw_params(self, rng):
        severity_lo, severity_hi = (0.0, 0.55)
        infected = rng.random() < self.config.infection_rate
        if infected:
            severity_lo, severity_hi = (0.35, 1.0)
        severity = rng.uniform(severity_lo, severity_hi)
        ventilated = rng.random() < 0.15 + 0.5 * severity
        baselines, phases, doses = {}, {}, {}
        for spec in self.config.variables:
            if spec.kind == "continuous":
                baselines[spec.name] = rng.normal(spec.baseline, spec.between_sd)
                phases[spec.name] = (rng.uniform(0.0, 2.0 * math.pi), rng.uniform(0.6, 1.4))
            elif spec.kind == "dose":
                administered = rng.random() < spec.admin_prob
                if administered:
                    before = max(rng.normal(spec.baseline, spec.between_sd), 0.05)
                    after = max(rng.normal(spec.baseline, spec.between_sd), 0.05)
                    change = rng.uniform(12.0, 36.0)
                    doses[spec.name] = (before, after, change)
        statics = {
            "Age": float(np.clip(rng.normal(65.0, 15.0), 18.0, 95.0)),
            "Gender": float(rng.integers(0, 2)),
        }
        return PatientParams(severity, infected, ventilated, baselines, phases, doses, statics)

    def _emit_events(self, idx, p, rng, span):
        obs = []
        if p.ventilated:
            for h in range(int(span)):
                if rng.random() < 0.9:
                    obs.append(Observation(h + rng.random() * 0.999, "MechVent", 1.0))
        if p.infected and self.config.infection_proxy:
            for _ in range(int(rng.integers(2, 5))):
                obs.append(Observation(rng.uniform(0.0, 23.0), "Antibiotic", 1.0))
            obs.append(Observation(rng.uniform(0.5, 20.0), "BloodCulture", 1.0))
        return obs

    def _generate(self):
        rng = np.random.default_rng(self.seed)
        span = self.config.span_hours
        width = len(str(max(self.config.n_patients - 1, 1)))
        for idx in range(self.config.n_patients):
            p = self._draw_params(rng)
            self.params.append(p)
            obs = []
            for spec in self.config.variables:
                if spec.kind == "event":
                    continue
                if spec.kind == "dose" and spec.name not in p.dose_levels:
                    continue
                for h in range(int(span)):
                    if rng.random() >= spec.sampling_rate:
                        continue
                    t = h + rng.random() * 0.999
                    value = self.latent(idx, spec.name, t)
                    if spec.noise_sd > 0.0 and self.config.noise_scale > 0.0:
                        value += rng.normal(0.0, spec.noise_sd * self.config.noise_scale)
                    obs.append(Observation(t, spec.name, value))
            obs.extend(self._emit_events(idx, p, rng, span))
            pid = f"synth{idx:0{width}d}"
            self.series.append(SparseSeries(pid, obs, dict(p.statics)))

    # -- manifest -----------------------------------------------------------

    def manifest(self):
        return {
            "seed": self.seed,
            "n_patients": self.config.n_patients,
            "span_hours": self.config.span_hours,
            "noise_scale": self.config.noise_scale,
            "infection_rate": self.config.infection_rate,
            "infection_proxy": self.config.infection_proxy,
            "statics": ["Age", "Gender"],
            "variables": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "missingness": round(1.0 - s.sampling_rate, 6),
                    "roles": list(s.roles),
                }
                for s in self.config.variables
            ],
            "couplings": [
                {
                    "drug": c.drug,
                    "target": c.target,
                    "lag_hours": c.lag_hours,
                    "effect_sd": c.effect_sd,
                }
                for c in self.config.couplings
            ],
        }


def generate_cohort(config, seed):
    return SyntheticCohort(config, seed)


def parse_couplings(text):
    """Parse ``drug:target:lag:effect`` items separated by semicolons."""
    couplings = []
    for item in filter(None, (part.strip() for part in text.split(";"))):
        fields = item.split(":")
        if len(fields) != 4:
            raise ConfigError(f"bad coupling {item!r}, want drug:target:lag:effect")
        couplings.append(CouplingSpec(fields[0], fields[1], float(fields[2]), float(fields[3])))
    return couplings
