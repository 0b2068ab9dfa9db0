"""Training loop: forcing strategies, masked-MSE objective, early stopping.

Every iterative-decoder mode runs through the same step-by-step rollout.
A per-step selection plan decides whether history position t holds the
ground-truth value or the model's own prediction; teacher forcing is the
all-gold plan and student forcing the all-prediction plan, so the
scheduled-sampling endpoints reproduce them bit for bit.  When
backpropagation through predictions is off, fed-back predictions are
detached and only the usual per-step gradients remain (the forward loss
is unchanged either way).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import TARGET_HOURS
from .errors import ConfigError, TrainingError
from .models import make_batch


def curriculum_ratio(curriculum, epoch):
    """Linear teacher-forcing ratio at an epoch.

    eps_start + (eps_end - eps_start) * min(e, L) / L, endpoints in [0, 1].
    """
    c = curriculum
    return c.eps_start + (c.eps_end - c.eps_start) * (min(epoch, c.length) / c.length)


def selection_plan(curriculum, epoch, batch_size, rng, steps=TARGET_HOURS):
    """Per-step, per-window teacher flags for one training batch.

    Entry [b, t-1] == True means history position t of window b carries
    the gold value; False means the model's own step-t prediction.
    Deterministic selection teacher-forces exactly the first
    floor(steps * ratio) positions of every window.
    """
    kind = curriculum.kind
    if kind == "teacher":
        return np.ones((batch_size, steps), dtype=bool)
    if kind == "student":
        return np.zeros((batch_size, steps), dtype=bool)
    if kind != "scheduled":
        raise ConfigError(f"no selection plan for curriculum kind {kind!r}")
    ratio = curriculum_ratio(curriculum, epoch)
    if curriculum.selection == "deterministic":
        cut = math.floor(steps * ratio)
        plan = np.zeros((batch_size, steps), dtype=bool)
        plan[:, :cut] = True
        return plan
    return rng.random((batch_size, steps)) < ratio


def masked_mse_loss(preds, target_values, target_mask):
    """Squared error at observed target cells, averaged over B*T steps."""
    batch, steps = target_values.shape[0], target_values.shape[1]
    diff = (preds - Tensor(target_values)) * Tensor(target_mask)
    return ad.total(diff * diff) * (1.0 / (batch * steps))


def _mix_history_row(gold_row, pred_row, teacher_col, bp):
    """Blend gold/prediction per window; detach predictions unless bp."""
    if teacher_col.all():
        return gold_row
    used = pred_row if bp else pred_row.detach()
    if not teacher_col.any():
        return used
    sel = Tensor(teacher_col.astype(np.float64).reshape(-1, 1, 1))
    return gold_row * sel + used * (1.0 - sel)


def ims_rollout_with_plan(model, memory, target_values, plan, bp, rng=None):
    """Forced rollout of the iterative decoder over one memory.

    Returns (B, T, F) predictions; per-step outputs are collected so the
    caller can probe gradient flow between steps.
    """
    decoder = model.decoder
    batch, steps = target_values.shape[0], target_values.shape[1]
    history = [decoder.start_row(batch)]
    outputs = []
    for t in range(1, steps + 1):
        pred = decoder.step(history, memory, rng=rng)
        outputs.append(pred)
        if t < steps:
            gold_row = Tensor(target_values[:, t - 1 : t, :])
            history.append(_mix_history_row(gold_row, pred, plan[:, t - 1], bp))
    return ad.concat(outputs, axis=1), outputs


def forward_training(model, batch, curriculum, epoch, forcing_rng, dropout_rng=None):
    """Training-mode predictions for any decoder kind."""
    rng = dropout_rng if model.cfg.dropout > 0 else None
    if model.baseline is not None:
        return model.baseline.forward(batch.obs_values)
    memory = model.encode_batch(batch, rng=rng)
    if model.cfg.decoder == "dms":
        if isinstance(memory, list):
            return ad.concat([model.decoder.forward(m, rng=rng) for m in memory], axis=0)
        return model.decoder.forward(memory, rng=rng)
    plan = selection_plan(curriculum, epoch, batch.size, forcing_rng)
    bp = curriculum.bp
    if isinstance(memory, list):
        parts = []
        for i, mem in enumerate(memory):
            preds, _ = ims_rollout_with_plan(
                model, mem, batch.target_values[i : i + 1], plan[i : i + 1], bp, rng=rng
            )
            parts.append(preds)
        return ad.concat(parts, axis=0)
    preds, _ = ims_rollout_with_plan(model, memory, batch.target_values, plan, bp, rng=rng)
    return preds


class Adam:
    """Adam with optional global-norm gradient clipping."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip = clip
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params
        ]
        if self.clip > 0.0:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.clip:
                scale = self.clip / norm
                grads = [g * scale for g in grads]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def training_step(model, batch, curriculum, epoch, optimizer, forcing_rng, dropout_rng=None):
    """One forward/backward/update; returns the masked-MSE loss value."""
    optimizer.zero_grad()
    preds = forward_training(model, batch, curriculum, epoch, forcing_rng, dropout_rng)
    loss = masked_mse_loss(preds, batch.target_values, batch.target_mask)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"non-finite training loss {value} at epoch {epoch}")
    if value == 0.0:
        # nothing observed in the target window: no gradient, no update
        return value
    loss.backward()
    optimizer.step()
    return value


def eval_masked_mse(model, windows, catalog, batch_size):
    """Inference-mode masked MSE over a window list (the dev metric)."""
    if not windows:
        raise ConfigError("cannot evaluate on an empty split")
    total_sq = 0.0
    for i in range(0, len(windows), batch_size):
        batch = make_batch(windows[i : i + batch_size], catalog)
        preds = model.forecast_batch(batch)
        diff = (batch.target_values - preds) * batch.target_mask
        total_sq += float(np.sum(diff * diff))
    return total_sq / (len(windows) * TARGET_HOURS)


@dataclass
class FitResult:
    history: list = field(default_factory=list)  # per-epoch metric rows
    timing: list = field(default_factory=list)  # (epoch, wall seconds)
    best_dev: float = math.inf
    best_epoch: int = -1
    stop_reason: str = ""
    epochs_run: int = 0


def fit(model, train_windows, dev_windows, cfg, catalog, progress=None):
    """Train with early stopping on dev masked MSE; restores best params.

    RNG streams (batch order, forcing draws, dropout) are derived
    independently from the run seed, so curricula that do not consume
    forcing randomness still see identical batches and dropout masks.
    """
    if not train_windows or not dev_windows:
        raise ConfigError("train and dev splits must be non-empty")
    batch_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    forcing_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    dropout_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 3)))
    optimizer = Adam(model.parameters(), cfg.learning_rate, clip=cfg.grad_clip)
    curriculum = model.cfg.curriculum
    result = FitResult()
    best_state = model.state_dict()
    patience_left = cfg.patience
    order = np.arange(len(train_windows))
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        batch_rng.shuffle(order)
        seen = 0
        loss_sum = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            batch = make_batch([train_windows[j] for j in idx], catalog)
            loss = training_step(
                model, batch, curriculum, epoch, optimizer, forcing_rng, dropout_rng
            )
            loss_sum += loss * batch.size
            seen += batch.size
        train_mse = loss_sum / seen
        dev_mse = eval_masked_mse(model, dev_windows, catalog, cfg.batch_size)
        ratio = (
            curriculum_ratio(curriculum, epoch)
            if curriculum.kind == "scheduled"
            else {"teacher": 1.0, "student": 0.0}.get(curriculum.kind, 0.0)
        )
        result.history.append(
            {
                "epoch": epoch,
                "train_mse": train_mse,
                "dev_mse": dev_mse,
                "ratio": ratio,
                "lr": cfg.learning_rate,
            }
        )
        result.timing.append((epoch, time.perf_counter() - started))
        result.epochs_run = epoch + 1
        if progress is not None:
            progress(result.history[-1])
        if dev_mse < result.best_dev:
            result.best_dev = dev_mse
            result.best_epoch = epoch
            best_state = model.state_dict()
            patience_left = cfg.patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                result.stop_reason = "patience"
                break
    if not result.stop_reason:
        result.stop_reason = "epochs"
    model.load_state_dict(best_state)
    return result
