"""Consensus-definition engines: SOFA, SAPS-II, Sepsis-3 labeling.

All scoring reads raw-unit 24-hour windows through their observation
mask; values at masked cells are invisible.  Derived quantities follow
the usual clinical conventions: MAP = (SBP + 2*DBP) / 3 from same-hour
pairs, Horowitz ratio PaO2/FiO2 from same-hour pairs with FiO2 stored as
a fraction (inputs above 1 are treated as percentages), and a window
counts as mechanically ventilated if an MV-tagged variable is observed
nonzero anywhere in it.

Threshold semantics: each subscore/point band is entered at its printed
boundary, honoring strict inequalities, and any real-valued gap between
two printed bands belongs to the band with fewer points (a value must
reach a band's cutoff to earn its points).  This keeps every component
exhaustive over the reals and monotone in severity.  Entirely unobserved
components contribute 0 points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OBS_HOURS, VariableCatalog, bin_to_grid
from .errors import ScoringError

SOFA_WINDOW = 24


class HourlyVitals:
    """One raw-unit 24 h scoring window: values, mask, catalog."""

    def __init__(self, values, mask, catalog):
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask, dtype=np.float64)
        if values.shape != mask.shape or values.ndim != 2:
            raise ScoringError(f"bad window shapes {values.shape} / {mask.shape}")
        if values.shape[0] != SOFA_WINDOW:
            raise ScoringError(f"scoring window must span 24 h, got {values.shape[0]}")
        if values.shape[1] != catalog.n_dynamic:
            raise ScoringError("window width does not match the catalog")
        self.values = values
        self.mask = mask.astype(bool)
        self.catalog = catalog

    def observed(self, role):
        """Observed values of a role-tagged variable (1-d array, maybe empty)."""
        col = self.catalog.column_for_role(role)
        if col is None:
            return np.empty(0)
        rows = self.mask[:, col]
        return self.values[rows, col]

    def hourly(self, role):
        """Per-hour value with NaN where unobserved (or role absent)."""
        col = self.catalog.column_for_role(role)
        out = np.full(SOFA_WINDOW, np.nan)
        if col is not None:
            out[self.mask[:, col]] = self.values[self.mask[:, col], col]
        return out

    def map_series(self):
        """MAP per hour where both SBP and DBP were observed that hour."""
        sbp = self.hourly("sofa:sbp")
        dbp = self.hourly("sofa:dbp")
        return (sbp + 2.0 * dbp) / 3.0

    def horowitz_series(self):
        """PaO2/FiO2 per hour where both were observed that hour."""
        pao2 = self.hourly("sofa:pao2")
        fio2 = self.hourly("sofa:fio2").copy()
        high = fio2 > 1.0
        fio2[high] = fio2[high] / 100.0
        fio2[fio2 <= 0.0] = np.nan
        return pao2 / fio2

    def ventilated(self):
        return bool(np.any(self.observed("mv") != 0.0))

    def gcs_series(self):
        """Summed GCS per hour where all three components were observed."""
        return (
            self.hourly("sofa:gcs_eye")
            + self.hourly("sofa:gcs_motor")
            + self.hourly("sofa:gcs_verbal")
        )


def forecast_vitals(forecast_raw, gold_mask, catalog):
    """Scoring view of a forecast: forecast values behind the gold mask.

    Forecast cells with no corresponding observed gold value are masked
    out, so they can never influence a score.
    """
    return HourlyVitals(forecast_raw, gold_mask, catalog)


def _nan_min(series):
    finite = series[~np.isnan(series)]
    return None if finite.size == 0 else float(finite.min())


def _nan_max(series):
    finite = series[~np.isnan(series)]
    return None if finite.size == 0 else float(finite.max())


def _positive(values):
    pos = values[values > 0.0]
    return None if pos.size == 0 else pos


# -- SOFA ------------------------------------------------------------------


@dataclass(frozen=True)
class SofaSubscores:
    cns: int
    cardio: int
    resp: int
    coag: int
    liver: int
    renal: int

    @property
    def total(self):
        return self.cns + self.cardio + self.resp + self.coag + self.liver + self.renal

    def as_vector(self):
        return np.array(
            [self.cns, self.cardio, self.resp, self.coag, self.liver, self.renal],
            dtype=np.float64,
        )


def _sofa_cns(window):
    g = _nan_min(window.gcs_series())
    if g is None:
        return 0
    if g < 6.0:
        return 4
    if g <= 9.0:
        return 3
    if g <= 12.0:
        return 2
    if g <= 14.0:
        return 1
    return 0


def _sofa_cardio(window):
    dopamine = _positive(window.observed("sofa:dopamine"))
    dobutamine = _positive(window.observed("sofa:dobutamine"))
    epinephrine = _positive(window.observed("sofa:epinephrine"))
    norepinephrine = _positive(window.observed("sofa:norepinephrine"))
    dop_max = None if dopamine is None else float(dopamine.max())
    epi_max = None if epinephrine is None else float(epinephrine.max())
    nor_max = None if norepinephrine is None else float(norepinephrine.max())
    if (
        (dop_max is not None and dop_max > 15.0)
        or (epi_max is not None and epi_max > 0.1)
        or (nor_max is not None and nor_max > 0.1)
    ):
        return 4
    if (dop_max is not None and dop_max > 5.0) or epi_max is not None or nor_max is not None:
        return 3
    if dop_max is not None or dobutamine is not None:
        return 2
    map_min = _nan_min(window.map_series())
    if map_min is not None and map_min < 70.0:
        return 1
    return 0


def _sofa_resp(window):
    ratio = _nan_min(window.horowitz_series())
    if ratio is None:
        return 0
    mv = window.ventilated()
    if ratio < 100.0 and mv:
        return 4
    if ratio < 200.0 and mv:
        return 3
    if ratio < 300.0:
        return 2
    if ratio < 400.0:
        return 1
    return 0


def _sofa_coag(window):
    platelets = _nan_min(window.hourly("sofa:platelets"))
    if platelets is None:
        return 0
    if platelets < 20.0:
        return 4
    if platelets < 50.0:
        return 3
    if platelets < 100.0:
        return 2
    if platelets < 150.0:
        return 1
    return 0


def _sofa_liver(window):
    bilirubin = _nan_max(window.hourly("sofa:bilirubin"))
    if bilirubin is None:
        return 0
    if bilirubin > 12.0:
        return 4
    if bilirubin >= 6.0:
        return 3
    if bilirubin >= 2.0:
        return 2
    if bilirubin >= 1.2:
        return 1
    return 0


def _sofa_renal(window):
    creatinine = _nan_max(window.hourly("sofa:creatinine"))
    score = 0
    if creatinine is not None:
        if creatinine > 5.0:
            score = 4
        elif creatinine >= 3.5:
            score = 3
        elif creatinine >= 2.0:
            score = 2
        elif creatinine >= 1.2:
            score = 1
    urine = window.observed("sofa:urine")
    if urine.size:
        daily = float(urine.sum())
        if daily < 200.0:
            score = max(score, 4)
        elif daily < 500.0:
            score = max(score, 3)
    return score


def sofa_score(window):
    """Worst-over-window subscores for the six organ systems."""
    return SofaSubscores(
        cns=_sofa_cns(window),
        cardio=_sofa_cardio(window),
        resp=_sofa_resp(window),
        coag=_sofa_coag(window),
        liver=_sofa_liver(window),
        renal=_sofa_renal(window),
    )


# -- SAPS-II -----------------------------------------------------------------


SAPS_COMPONENTS = (
    "hr", "sbp", "temp", "gcs", "pao2_fio2", "bun", "urine",
    "sodium", "potassium", "bicarbonate", "wbc", "bilirubin",
)


@dataclass(frozen=True)
class SapsPoints:
    points: dict

    @property
    def total(self):
        return sum(self.points.values())


def _saps_hr(v):
    if v < 40.0:
        return 11
    if v > 159.0:
        return 7
    if v >= 120.0:
        return 4
    if v <= 69.0 and v >= 40.0:
        return 2
    return 0


def _saps_sbp(v):
    if v < 70.0:
        return 13
    if v <= 99.0:
        return 5
    if v > 199.0:
        return 2
    return 0


def _extreme_points(series, pts):
    """Points at the worst (min or max) observed value."""
    lo, hi = _nan_min(series), _nan_max(series)
    if lo is None:
        return 0
    return max(pts(lo), pts(hi))


def saps_score(window):
    """SAPS-II points from the non-static components over one 24 h window.

    Aggregation per component follows the table footnotes: worst of
    min/max for HR, SBP, sodium, potassium and WBC; largest value for
    temperature, BUN and bilirubin; smallest for GCS, PaO2/FiO2 and
    bicarbonate; 24 h sum for urine output.
    """
    pts = {}
    pts["hr"] = _extreme_points(window.hourly("saps:hr"), _saps_hr)
    pts["sbp"] = _extreme_points(window.hourly("saps:sbp"), _saps_sbp)

    temp = _nan_max(window.hourly("saps:temp"))
    pts["temp"] = 3 if (temp is not None and temp >= 39.0) else 0

    gcs = _nan_min(window.gcs_series())
    if gcs is None:
        pts["gcs"] = 0
    elif gcs < 6.0:
        pts["gcs"] = 26
    elif gcs <= 8.0:
        pts["gcs"] = 13
    elif gcs <= 10.0:
        pts["gcs"] = 7
    elif gcs <= 13.0:
        pts["gcs"] = 5
    else:
        pts["gcs"] = 0

    ratio = _nan_min(window.horowitz_series())
    if not window.ventilated() or ratio is None:
        pts["pao2_fio2"] = 0
    elif ratio < 100.0:
        pts["pao2_fio2"] = 11
    elif ratio <= 199.0:
        pts["pao2_fio2"] = 9
    else:
        pts["pao2_fio2"] = 6

    bun = _nan_max(window.hourly("saps:bun"))
    if bun is None:
        pts["bun"] = 0
    elif bun > 83.0:
        pts["bun"] = 10
    elif bun >= 28.0:
        pts["bun"] = 6
    else:
        pts["bun"] = 0

    urine = window.observed("sofa:urine")
    if urine.size == 0:
        pts["urine"] = 0
    else:
        daily = float(urine.sum())
        if daily < 500.0:
            pts["urine"] = 11
        elif daily <= 599.0:
            pts["urine"] = 4
        else:
            pts["urine"] = 0

    def sodium_pts(v):
        if v < 125.0:
            return 5
        if v >= 145.0:
            return 1
        return 0

    def potassium_pts(v):
        if v < 3.0 or v >= 5.0:
            return 5
        return 0

    def wbc_pts(v):
        if v < 1.0:
            return 12
        if v >= 20.0:
            return 3
        return 0

    pts["sodium"] = _extreme_points(window.hourly("saps:sodium"), sodium_pts)
    pts["potassium"] = _extreme_points(window.hourly("saps:potassium"), potassium_pts)

    bicarbonate = _nan_min(window.hourly("saps:bicarbonate"))
    if bicarbonate is None:
        pts["bicarbonate"] = 0
    elif bicarbonate < 15.0:
        pts["bicarbonate"] = 6
    elif bicarbonate <= 19.0:
        pts["bicarbonate"] = 3
    else:
        pts["bicarbonate"] = 0

    pts["wbc"] = _extreme_points(window.hourly("saps:wbc"), wbc_pts)

    bilirubin = _nan_max(window.hourly("sofa:bilirubin"))
    if bilirubin is None:
        pts["bilirubin"] = 0
    elif bilirubin >= 6.0:
        pts["bilirubin"] = 9
    elif bilirubin >= 4.0:
        pts["bilirubin"] = 4
    else:
        pts["bilirubin"] = 0

    return SapsPoints(pts)


# -- Sepsis-3 ------------------------------------------------------------------


def suspected_infection(window):
    """Antibiotics plus a blood culture, both within the first 24 h."""
    antibiotics = window.observed("infection:antibiotic")
    culture = window.observed("infection:culture")
    return bool(np.any(antibiotics > 0.0)) and bool(np.any(culture > 0.0))


def sepsis_assessment(baseline, gold_followup, forecast_followup):
    """Cohort membership and (chi, chi_hat) for one patient.

    ``baseline`` covers hours 1-24, the follow-up windows hours 25-48;
    chi flags a SOFA increase of two or more points over the baseline,
    once from gold data and once from the forecast.
    """
    infected = suspected_infection(baseline)
    base_total = sofa_score(baseline).total
    chi = int(sofa_score(gold_followup).total - base_total >= 2)
    chi_hat = int(sofa_score(forecast_followup).total - base_total >= 2)
    return infected, chi, chi_hat


def score_patient_record(series, catalog):
    """Gold scores for one raw-unit patient record (CLI `score` payload)."""
    if series.span < OBS_HOURS:
        raise ScoringError(
            f"patient {series.patient_id} spans {series.span:.1f} h, need 24 h"
        )
    grid = bin_to_grid(series, catalog, hours=max(int(np.ceil(series.span)), 48))
    first = HourlyVitals(grid.values[:24], grid.mask[:24], catalog)
    sofa = sofa_score(first)
    saps = saps_score(first)
    infected = suspected_infection(first)
    chi = ""
    if series.span >= 48.0:
        followup = HourlyVitals(grid.values[24:48], grid.mask[24:48], catalog)
        chi = int(sofa_score(followup).total - sofa.total >= 2)
    return {
        "patient_id": series.patient_id,
        "sofa_total": sofa.total,
        "sofa_cns": sofa.cns,
        "sofa_cardio": sofa.cardio,
        "sofa_resp": sofa.resp,
        "sofa_coag": sofa.coag,
        "sofa_liver": sofa.liver,
        "sofa_renal": sofa.renal,
        "saps_total": saps.total,
        "infected": int(infected),
        "chi": chi,
    }
