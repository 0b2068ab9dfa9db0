"""Evaluation metrics, confidence intervals, and the drug ablation study.

The masked MSE divides by windows * timesteps (not by observed-cell
count), and the full-horizon value is an exact weighted combination of
the early (hours 1-8) and late (hours 9-24) windows.  Score-based
metrics destandardize forecasts, hide them behind the gold observation
mask, and run the same consensus engines as the gold side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import scoring
from .data import TARGET_HOURS, destandardize_grid
from .errors import ConfigError, MetricError
from .models import make_batch

Z_95 = 1.96


def masked_mse(gold, pred, mask, hour_range=(1, TARGET_HOURS)):
    """Eq.-style masked MSE over a 1-based inclusive hour range."""
    lo, hi = hour_range
    if not (1 <= lo <= hi <= TARGET_HOURS):
        raise ConfigError(f"bad hour range {hour_range}")
    return float(np.mean(masked_mse_samples(gold, pred, mask, hour_range)))


def masked_mse_samples(gold, pred, mask, hour_range=(1, TARGET_HOURS)):
    """Per-window masked squared error, averaged over the range's steps."""
    lo, hi = hour_range
    if not (1 <= lo <= hi <= TARGET_HOURS):
        raise ConfigError(f"bad hour range {hour_range}")
    gold = np.asarray(gold, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if gold.shape != pred.shape or gold.shape != mask.shape:
        raise ConfigError("gold/pred/mask shapes differ")
    diff = (gold[:, lo - 1 : hi] - pred[:, lo - 1 : hi]) * mask[:, lo - 1 : hi]
    return (diff.reshape(diff.shape[0], -1) ** 2).sum(axis=1) / (hi - lo + 1)


def confidence_interval(samples):
    """95% normal-approximation interval for the mean of the samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        raise MetricError("confidence interval needs at least two samples")
    center = float(samples.mean())
    half = Z_95 * float(samples.std(ddof=1)) / math.sqrt(samples.size)
    return center - half, center + half


def acc_sepsis(labels):
    """Percent agreement of predicted vs gold sepsis flags on cohort I."""
    if not labels:
        raise MetricError("sepsis accuracy is undefined on an empty cohort")
    matches = [100.0 * (chi == chi_hat) for chi, chi_hat in labels]
    return float(np.mean(matches)), matches


def confusion(labels):
    """(TP, FP, FN, TN, F1%) with chi = 1 as the positive class."""
    if not labels:
        raise MetricError("confusion matrix is undefined on an empty cohort")
    tp = sum(1 for chi, chi_hat in labels if chi == 1 and chi_hat == 1)
    fp = sum(1 for chi, chi_hat in labels if chi == 0 and chi_hat == 1)
    fn = sum(1 for chi, chi_hat in labels if chi == 1 and chi_hat == 0)
    tn = sum(1 for chi, chi_hat in labels if chi == 0 and chi_hat == 0)
    denom = 2 * tp + fp + fn
    f1 = 100.0 * 2 * tp / denom if denom else 0.0
    return tp, fp, fn, tn, f1


def welch_t_test(a, b):
    """Unequal-variance two-sided t-test; returns (t, p)."""
    t, p = sstats.ttest_ind(np.asarray(a), np.asarray(b), equal_var=False)
    return float(t), float(p)


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U: exact for small tie-free samples,
    normal approximation with tie correction otherwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size and b.size and np.ptp(a) == 0.0 and np.ptp(b) == 0.0 and a[0] == b[0]:
        return float(a.size * b.size / 2.0), 1.0
    pooled = np.concatenate([a, b])
    has_ties = np.unique(pooled).size < pooled.size
    method = "exact" if (max(a.size, b.size) <= 20 and not has_ties) else "asymptotic"
    res = sstats.mannwhitneyu(a, b, alternative="two-sided", method=method)
    return float(res.statistic), float(res.pvalue)


def cohens_d(a, b):
    """Pooled-sd standardized mean difference, mean(b) - mean(a)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise MetricError("effect size needs at least two samples per group")
    pooled_var = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    if pooled_var == 0.0:
        return 0.0
    return float((b.mean() - a.mean()) / math.sqrt(pooled_var))


# -- report assembly -------------------------------------------------------


@dataclass
class EvalReport:
    mse: tuple
    mse_1_8: tuple
    mse_9_24: tuple
    mse_sofa: tuple
    mse_saps: tuple
    acc_sepsis: tuple = None
    confusion: tuple = None  # (tp, fp, fn, tn)
    f1: float = None
    n_windows: int = 0
    n_cohort: int = 0

    def __post_init__(self):
        got = self.mse[0]
        want = (8.0 * self.mse_1_8[0] + 16.0 * self.mse_9_24[0]) / 24.0
        if abs(got - want) > 1e-12 * max(1.0, abs(want)):
            raise MetricError(
                f"window identity violated: mse={got!r} vs combined={want!r}"
            )

    def rows(self):
        out = []
        for name in ("mse", "mse_1_8", "mse_9_24", "mse_sofa", "mse_saps", "acc_sepsis"):
            entry = getattr(self, name)
            if entry is None:
                continue
            out.append((name, entry[0], entry[1], entry[2]))
        if self.confusion is not None:
            tp, fp, fn, tn = self.confusion
            out.extend(
                [("sepsis_tp", tp, "", ""), ("sepsis_fp", fp, "", ""),
                 ("sepsis_fn", fn, "", ""), ("sepsis_tn", tn, "", ""),
                 ("sepsis_f1", self.f1, "", "")]
            )
        out.append(("n_windows", self.n_windows, "", ""))
        out.append(("n_sepsis_cohort", self.n_cohort, "", ""))
        return out


def _with_ci(samples):
    lo, hi = confidence_interval(samples)
    return (float(np.mean(samples)), lo, hi)


def forecast_windows(model, windows, catalog, batch_size):
    """Standardized (N, 24, |F|) forecasts for a window list."""
    preds = []
    for i in range(0, len(windows), batch_size):
        batch = make_batch(windows[i : i + batch_size], catalog)
        preds.append(model.forecast_batch(batch))
    return np.concatenate(preds, axis=0)


def evaluate_model(model, windows, catalog, stats, batch_size=32):
    """Full metric suite over evaluation windows.

    Sepsis labeling uses only admission-anchored windows (start == 0),
    which carry the first 24 h as baseline and hours 25-48 as follow-up.
    """
    if not windows:
        raise ConfigError("cannot evaluate on an empty window list")
    preds = forecast_windows(model, windows, catalog, batch_size)
    gold = np.stack([w.target_values for w in windows])
    mask = np.stack([w.target_mask for w in windows])

    early = masked_mse_samples(gold, preds, mask, (1, 8))
    late = masked_mse_samples(gold, preds, mask, (9, 24))
    full = (8.0 * early + 16.0 * late) / 24.0

    sofa_sq, saps_sq = [], []
    labels = []
    for i, window in enumerate(windows):
        gold_raw = destandardize_grid(window.target_values, stats, catalog)
        pred_raw = destandardize_grid(preds[i], stats, catalog)
        gold_vitals = scoring.HourlyVitals(gold_raw, window.target_mask, catalog)
        pred_vitals = scoring.forecast_vitals(pred_raw, window.target_mask, catalog)
        gold_sofa = scoring.sofa_score(gold_vitals)
        pred_sofa = scoring.sofa_score(pred_vitals)
        diff = gold_sofa.as_vector() - pred_sofa.as_vector()
        sofa_sq.append(float(diff @ diff))
        saps_sq.append(
            float((scoring.saps_score(gold_vitals).total - scoring.saps_score(pred_vitals).total) ** 2)
        )
        if window.start == 0:
            base_raw = destandardize_grid(window.obs_values, stats, catalog)
            baseline = scoring.HourlyVitals(base_raw, window.obs_mask, catalog)
            infected, chi, chi_hat = scoring.sepsis_assessment(
                baseline, gold_vitals, pred_vitals
            )
            if infected:
                labels.append((chi, chi_hat))

    report_kwargs = dict(
        mse=_with_ci(full),
        mse_1_8=_with_ci(early),
        mse_9_24=_with_ci(late),
        mse_sofa=_with_ci(sofa_sq),
        mse_saps=_with_ci(saps_sq),
        n_windows=len(windows),
        n_cohort=len(labels),
    )
    if labels:
        accuracy, matches = acc_sepsis(labels)
        lo, hi = confidence_interval(matches) if len(matches) >= 2 else (accuracy, accuracy)
        tp, fp, fn, tn, f1 = confusion(labels)
        report_kwargs.update(
            acc_sepsis=(accuracy, lo, hi), confusion=(tp, fp, fn, tn), f1=f1
        )
    return EvalReport(**report_kwargs)


# -- drug ablation ---------------------------------------------------------


@dataclass
class AblationRow:
    variable: str
    mean_q1: float
    mean_q3: float
    mean_diff: float
    t_p: float
    u_p: float
    cohens_d: float
    significant_t: bool
    significant_u: bool
    significant: bool


@dataclass
class AblationResult:
    drug: str
    q1: float
    q3: float
    alpha: float
    threshold: float
    rows: list = field(default_factory=list)

    def significant_rows(self):
        return [r for r in self.rows if r.significant]


def _clamped_rollout(model, batch, catalog, column, clamp_std):
    """Decode with one autoregressive input channel pinned to a constant."""
    from . import autodiff as ad

    decoder = model.decoder
    with ad.no_grad():
        memories = model.encode_batch(batch)
        if not isinstance(memories, list):
            memories = [memories]
            slices = [slice(0, batch.size)]
        else:
            slices = [slice(i, i + 1) for i in range(batch.size)]
        outputs = np.empty((batch.size, TARGET_HOURS, catalog.n_dynamic))
        for memory, rows in zip(memories, slices):
            n = rows.stop - rows.start
            start = decoder.start_row(n).data.copy()
            start[:, :, column] = clamp_std
            history = [ad.Tensor(start)]
            for t in range(TARGET_HOURS):
                pred = decoder.step(history, memory)
                outputs[rows, t] = pred.data[:, 0, :]
                fed = pred.data.copy()
                fed[:, :, column] = clamp_std
                history.append(ad.Tensor(fed))
            history.pop()
    return outputs


def observed_drug_values(windows, column):
    values = []
    for w in windows:
        values.append(w.obs_values[w.obs_mask[:, column].astype(bool), column])
        values.append(w.target_values[w.target_mask[:, column].astype(bool), column])
    flat = np.concatenate(values) if values else np.empty(0)
    return flat


def drug_ablation(model, windows, catalog, stats, drug, alpha=0.05, batch_size=32):
    """Q1-vs-Q3 intervention on one drug's decoder input channel.

    Every test input is decoded twice with the drug channel clamped to
    the first/third quartile of its sampled doses; per-variable means
    over the 24 predicted steps form the two comparison groups.  Welch's
    t and Mann-Whitney U are Bonferroni-corrected over the |F|-1
    non-intervened variables; a variable counts as significant when both
    tests clear the corrected threshold.
    """
    if model.cfg.decoder != "ims":
        raise ConfigError("drug ablation intervenes on the iterative decoder's input")
    column = catalog.index(drug)
    observed_std = observed_drug_values(windows, column)
    if observed_std.size < 4:
        raise ConfigError(f"not enough observed doses of {drug!r} for quartiles")
    raw = observed_std * stats.stds[drug] + stats.means[drug]
    q1_raw, q3_raw = (float(q) for q in np.percentile(raw, [25.0, 75.0]))
    q1_std = stats.transform_value(drug, q1_raw)
    q3_std = stats.transform_value(drug, q3_raw)

    lows, highs = [], []
    for i in range(0, len(windows), batch_size):
        batch = make_batch(windows[i : i + batch_size], catalog)
        lows.append(_clamped_rollout(model, batch, catalog, column, q1_std))
        highs.append(_clamped_rollout(model, batch, catalog, column, q3_std))
    low = np.concatenate(lows).mean(axis=1)  # (N, |F|): 24-step means
    high = np.concatenate(highs).mean(axis=1)

    names = [n for n in catalog.dynamic if n != drug]
    threshold = alpha / len(names)
    result = AblationResult(drug, q1_raw, q3_raw, alpha, threshold)
    for name in names:
        j = catalog.index(name)
        a, b = low[:, j], high[:, j]
        t_stat, t_p = welch_t_test(a, b)
        u_stat, u_p = mann_whitney_u(a, b)
        sig_t = bool(np.isfinite(t_p) and t_p < threshold)
        sig_u = bool(np.isfinite(u_p) and u_p < threshold)
        result.rows.append(
            AblationRow(
                variable=name,
                mean_q1=float(a.mean()),
                mean_q3=float(b.mean()),
                mean_diff=float(b.mean() - a.mean()),
                t_p=t_p,
                u_p=u_p,
                cohens_d=cohens_d(a, b),
                significant_t=sig_t,
                significant_u=sig_u,
                significant=sig_t and sig_u,
            )
        )
    return result
