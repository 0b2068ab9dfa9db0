"""Irregular clinical time series: triplets, hourly grids, windows.

A record is a set of (t, variable, value) observations plus static
features.  Binning to an hourly grid keeps the first observed value per
(hour, variable) cell and tracks an observation mask; later values within
the hour are discarded and counted.  Standardization is variable-wise
with statistics computed on the training split only, so an imputed cell
is exactly zero in model space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CatalogError, DataError, WindowError

OBS_HOURS = 24
TARGET_HOURS = 24
WINDOW_STEP = 4
WINDOW_SPAN = OBS_HOURS + TARGET_HOURS
MAX_START_HORIZON = 120  # five days


# Role tags used by the scoring engines; a catalog maps each tag to one of
# its variables (or declares it absent).
ROLE_TAGS = (
    "sofa:sbp", "sofa:dbp", "sofa:pao2", "sofa:fio2", "sofa:platelets",
    "sofa:bilirubin", "sofa:creatinine", "sofa:urine", "sofa:gcs_eye",
    "sofa:gcs_motor", "sofa:gcs_verbal", "sofa:dopamine", "sofa:dobutamine",
    "sofa:epinephrine", "sofa:norepinephrine", "mv",
    "saps:hr", "saps:sbp", "saps:temp", "saps:bun", "saps:sodium",
    "saps:potassium", "saps:bicarbonate", "saps:wbc",
    "infection:antibiotic", "infection:culture",
)


class VariableCatalog:
    """Ordered dynamic + static variable names with role tags."""

    def __init__(self, dynamic, statics=(), roles=None):
        self.dynamic = list(dynamic)
        self.statics = list(statics)
        names = self.dynamic + self.statics
        if len(set(names)) != len(names):
            raise CatalogError("variable identifiers must be unique")
        self.roles = {name: frozenset(tags) for name, tags in (roles or {}).items()}
        for name in self.roles:
            if name not in names:
                raise CatalogError(f"role tag on unknown variable {name!r}")
        self._index = {name: i for i, name in enumerate(self.dynamic)}
        self._static_index = {name: i for i, name in enumerate(self.statics)}
        self._role_to_var = {}
        for name, tags in self.roles.items():
            for tag in tags:
                if tag in self._role_to_var:
                    raise CatalogError(f"role {tag!r} tagged on two variables")
                self._role_to_var[tag] = name

    @property
    def n_dynamic(self):
        return len(self.dynamic)

    @property
    def n_static(self):
        return len(self.statics)

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise CatalogError(f"unknown dynamic variable {name!r}") from None

    def static_index(self, name):
        try:
            return self._static_index[name]
        except KeyError:
            raise CatalogError(f"unknown static variable {name!r}") from None

    def column_for_role(self, tag):
        """Dynamic column index carrying a role, or None if declared absent."""
        name = self._role_to_var.get(tag)
        return None if name is None else self._index[name]

    def to_dict(self):
        return {
            "dynamic": self.dynamic,
            "statics": self.statics,
            "roles": {k: sorted(v) for k, v in self.roles.items()},
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload["dynamic"], payload.get("statics", ()), payload.get("roles"))


@dataclass(frozen=True)
class Observation:
    t: float
    f: str
    v: float


@dataclass
class SparseSeries:
    """One patient record: sorted observations plus statics."""

    patient_id: str
    observations: list
    statics: dict = field(default_factory=dict)

    def __post_init__(self):
        for obs in self.observations:
            if obs.t < 0:
                raise DataError(f"negative observation time {obs.t} for {self.patient_id}")
        # stable sort: ties within an hour keep ingestion order
        self.observations = sorted(self.observations, key=lambda o: o.t)

    @property
    def span(self):
        return max((o.t for o in self.observations), default=0.0)


@dataclass
class DenseGrid:
    """Hourly value matrix with a parallel observation mask."""

    values: np.ndarray
    mask: np.ndarray
    statics: np.ndarray
    patient_id: str = ""
    discarded: int = 0

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise WindowError("grid value/mask shapes differ")

    @property
    def hours(self):
        return self.values.shape[0]


@dataclass
class WindowPair:
    """24 h observation segment plus the following 24 h target segment."""

    patient_id: str
    start: int
    obs_values: np.ndarray
    obs_mask: np.ndarray
    target_values: np.ndarray
    target_mask: np.ndarray
    statics: np.ndarray
    obs_triplets: list = field(default_factory=list)


class StandardizationStats:
    """Per-variable mean/std fitted on the training split."""

    def __init__(self, means, stds, degenerate=()):
        self.means = dict(means)
        self.stds = dict(stds)
        self.degenerate = set(degenerate)

    @classmethod
    def fit(cls, series_list, catalog):
        sums = {name: [0.0, 0.0, 0] for name in catalog.dynamic + catalog.statics}
        for series in series_list:
            for obs in series.observations:
                if obs.f not in sums:
                    raise CatalogError(f"observation of unknown variable {obs.f!r}")
                acc = sums[obs.f]
                acc[0] += obs.v
                acc[1] += obs.v * obs.v
                acc[2] += 1
            for name, value in series.statics.items():
                if name not in sums:
                    raise CatalogError(f"static of unknown variable {name!r}")
                acc = sums[name]
                acc[0] += value
                acc[1] += value * value
                acc[2] += 1
        means, stds, degenerate = {}, {}, set()
        for name, (s, s2, n) in sums.items():
            if n == 0:
                means[name] = 0.0
                stds[name] = 1.0
                degenerate.add(name)
                continue
            mean = s / n
            var = max(s2 / n - mean * mean, 0.0)
            std = math.sqrt(var)
            means[name] = mean
            if std <= 0.0:
                std = 1.0
                degenerate.add(name)
            stds[name] = std
        return cls(means, stds, degenerate)

    def transform_value(self, name, value):
        try:
            return (value - self.means[name]) / self.stds[name]
        except KeyError:
            raise CatalogError(f"no statistics for variable {name!r}") from None

    def inverse_value(self, name, value):
        try:
            return value * self.stds[name] + self.means[name]
        except KeyError:
            raise CatalogError(f"no statistics for variable {name!r}") from None

    def to_arrays(self, catalog):
        mean = np.array([self.means[n] for n in catalog.dynamic])
        std = np.array([self.stds[n] for n in catalog.dynamic])
        return mean, std

    def to_dict(self):
        return {
            "means": self.means,
            "stds": self.stds,
            "degenerate": sorted(self.degenerate),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload["means"], payload["stds"], payload.get("degenerate", ()))


def standardize(series, stats):
    """Variable-wise (v - mean) / std on observations and statics."""
    obs = [Observation(o.t, o.f, stats.transform_value(o.f, o.v)) for o in series.observations]
    statics = {k: stats.transform_value(k, v) for k, v in series.statics.items()}
    return SparseSeries(series.patient_id, obs, statics)


def destandardize(series, stats):
    obs = [Observation(o.t, o.f, stats.inverse_value(o.f, o.v)) for o in series.observations]
    statics = {k: stats.inverse_value(k, v) for k, v in series.statics.items()}
    return SparseSeries(series.patient_id, obs, statics)


def destandardize_grid(values, stats, catalog):
    mean, std = stats.to_arrays(catalog)
    return values * std + mean


def bin_to_grid(series, catalog, hours=None):
    """First-observed-value hourly binning with an observation mask.

    A measurement at an exact integer hour belongs to the bucket starting
    at that hour, so a series spanning D hours needs floor(D)+1 rows.
    Values observed after the first one in the same (hour, variable) cell
    are discarded and counted in ``grid.discarded``.
    """
    if hours is None:
        hours = int(math.floor(series.span)) + 1 if series.observations else 0
    n_f = catalog.n_dynamic
    values = np.zeros((hours, n_f))
    mask = np.zeros((hours, n_f))
    discarded = 0
    for obs in series.observations:
        h = int(math.floor(obs.t))
        col = catalog.index(obs.f)
        if h >= hours:
            continue
        if mask[h, col]:
            discarded += 1
        else:
            values[h, col] = obs.v
            mask[h, col] = 1.0
    statics = np.array([series.statics.get(name, 0.0) for name in catalog.statics])
    return DenseGrid(values, mask, statics, patient_id=series.patient_id, discarded=discarded)


def window_starts(span):
    """Starts 0, 4, 8, ... while start + 48 <= min(span, 120)."""
    horizon = min(span, MAX_START_HORIZON)
    if horizon < WINDOW_SPAN:
        return []
    last = int(math.floor((horizon - WINDOW_SPAN) / WINDOW_STEP))
    return [s * WINDOW_STEP for s in range(last + 1)]


def sliding_windows(series, catalog):
    """Slice 24 h + 24 h training windows out of one standardized series."""
    starts = window_starts(series.span)
    if not starts:
        return []
    grid = bin_to_grid(series, catalog, hours=max(starts) + WINDOW_SPAN)
    windows = []
    for start in starts:
        mid, end = start + OBS_HOURS, start + WINDOW_SPAN
        triplets = [
            Observation(o.t - start, o.f, o.v)
            for o in series.observations
            if start <= o.t < mid
        ]
        windows.append(
            WindowPair(
                patient_id=series.patient_id,
                start=start,
                obs_values=grid.values[start:mid].copy(),
                obs_mask=grid.mask[start:mid].copy(),
                target_values=grid.values[mid:end].copy(),
                target_mask=grid.mask[mid:end].copy(),
                statics=grid.statics,
                obs_triplets=triplets,
            )
        )
    return windows


def split_patients(series_list, fractions, seed):
    """Disjoint train/dev/test split by patient id."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {fractions}")
    order = sorted(range(len(series_list)), key=lambda i: series_list[i].patient_id)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_dev = int(round(fractions[1] * n))
    train = [series_list[i] for i in order[:n_train]]
    dev = [series_list[i] for i in order[n_train:n_train + n_dev]]
    test = [series_list[i] for i in order[n_train + n_dev:]]
    return train, dev, test


# -- file formats --------------------------------------------------------


def write_observations(path, series_list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "t_hours", "variable", "value"])
        for series in series_list:
            for obs in series.observations:
                writer.writerow([series.patient_id, repr(obs.t), obs.f, repr(obs.v)])


def write_statics(path, series_list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "variable", "value"])
        for series in series_list:
            for name in sorted(series.statics):
                writer.writerow([series.patient_id, name, repr(series.statics[name])])


def read_series(obs_path, statics_path=None):
    """Load triplet + statics files into SparseSeries, one per patient."""
    observations = {}
    order = []
    with open(obs_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0] == "patient_id":
                continue
            if len(row) != 4:
                raise DataError(f"bad observation row {row!r} in {obs_path}")
            pid, t, var, val = row
            if pid not in observations:
                observations[pid] = []
                order.append(pid)
            observations[pid].append(Observation(float(t), var, float(val)))
    statics = {pid: {} for pid in order}
    if statics_path is not None:
        with open(statics_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            for row in reader:
                if not row or row[0] == "patient_id":
                    continue
                if len(row) != 3:
                    raise DataError(f"bad statics row {row!r} in {statics_path}")
                pid, var, val = row
                statics.setdefault(pid, {})[var] = float(val)
                if pid not in observations:
                    observations[pid] = []
                    order.append(pid)
    return [SparseSeries(pid, observations[pid], statics.get(pid, {})) for pid in order]
