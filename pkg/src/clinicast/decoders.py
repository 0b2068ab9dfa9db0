"""Forecasting decoders: direct multi-step, iterative multi-step, linear.

The direct decoder cross-attends T learned queries to the encoder memory
through blocks with no attention between query rows, so the T predictions
are mutually independent given the memory.  The iterative decoder is a
standard causal transformer over its own (or teacher-supplied) history at
a working width equal to the output dimensionality, with a learned start
token so step 1 conditions on the memory alone.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .data import TARGET_HOURS
from .errors import RolloutError

MA_KERNEL = 25  # DLinear trend window, edge-replicated


class DMSDecoder(nn.Module):
    def __init__(self, out_dim, width, heads, layers, hidden, d_memory, rng,
                 dropout=0.0, steps=TARGET_HOURS):
        self.queries = nn.parameter(rng.normal(0.0, 0.05, size=(steps, width)))
        self.blocks = [
            nn.CrossOnlyBlock(width, heads, hidden, d_memory, rng, dropout)
            for _ in range(layers)
        ]
        # one output head per prediction step
        self.head_w = nn.parameter(nn.glorot(rng, width, out_dim, (steps, width, out_dim)))
        self.head_b = nn.parameter(np.zeros((steps, 1, out_dim)))
        self.steps = steps
        self.width = width

    def forward(self, memory, rng=None):
        batch = memory.shape[0]
        x = ad.reshape(self.queries, (1, self.steps, self.width)) + Tensor(
            np.zeros((batch, self.steps, self.width))
        )
        for block in self.blocks:
            x = block.forward(x, memory, rng=rng)
        per_step = ad.transpose(x, (1, 0, 2))  # (steps, batch, width)
        out = per_step @ self.head_w + self.head_b
        return ad.transpose(out, (1, 0, 2))  # (batch, steps, out_dim)


class IMSDecoder(nn.Module):
    """Autoregressive decoder working at width |F| (the output dimension)."""

    def __init__(self, out_dim, heads, layers, d_memory, rng, dropout=0.0,
                 steps=TARGET_HOURS, hidden=None):
        self.start = nn.parameter(rng.normal(0.0, 0.05, size=(out_dim,)))
        self.positions = Tensor(nn.sinusoidal_positions(steps, out_dim))
        self.blocks = [
            nn.DecoderBlock(out_dim, heads, hidden or 4 * out_dim, d_memory, rng, dropout)
            for _ in range(layers)
        ]
        self.out = nn.Linear(out_dim, out_dim, rng)
        self.out_dim = out_dim
        self.steps = steps

    def start_row(self, batch):
        """(batch, 1, |F|) start-token input for step 1."""
        return ad.reshape(self.start, (1, 1, self.out_dim)) + Tensor(
            np.zeros((batch, 1, self.out_dim))
        )

    def step(self, history_rows, memory, rng=None):
        """Predict the next row given the input history.

        history_rows: list of (batch, 1, |F|) tensors, the start token
        followed by previous target values (gold or predicted).  Returns
        the (batch, 1, |F|) prediction for the next step.
        """
        if not history_rows or len(history_rows) > self.steps:
            raise RolloutError(
                f"history of length {len(history_rows)} outside 1..{self.steps}"
            )
        x = history_rows[0] if len(history_rows) == 1 else ad.concat(history_rows, axis=1)
        x = x + ad.narrow(self.positions, 0, 0, x.shape[1])
        for block in self.blocks:
            x = block.forward(x, memory, rng=rng)
        last = ad.narrow(x, 1, x.shape[1] - 1, 1)
        return self.out.forward(last)

    def rollout(self, memory, rng=None, steps=None):
        """Inference decode: feed each prediction back as the next input."""
        steps = steps or self.steps
        batch = memory.shape[0]
        history = [self.start_row(batch)]
        outputs = []
        for _ in range(steps):
            y = self.step(history, memory, rng=rng)
            outputs.append(y)
            history.append(y)
        history.pop()  # the last prediction is never fed back
        return ad.concat(outputs, axis=1)


class LinearBaseline(nn.Module):
    """Per-variable affine map from 24 observed steps to 24 future steps.

    The weight is shared across variables, matching the reference
    long-horizon linear baseline.
    """

    def __init__(self, rng, steps_in=24, steps_out=TARGET_HOURS):
        self.weight = nn.parameter(nn.glorot(rng, steps_in, steps_out))
        self.bias = nn.parameter(np.zeros(steps_out))
        self.steps_in = steps_in

    def map_steps(self, x):
        by_var = ad.swapaxes(x, 1, 2)  # (batch, F, steps_in)
        mapped = by_var @ self.weight + self.bias
        return ad.swapaxes(mapped, 1, 2)

    def forward(self, obs_values):
        if not isinstance(obs_values, Tensor):
            obs_values = Tensor(obs_values)
        return self.map_steps(obs_values)


def moving_average_trend(values, kernel=MA_KERNEL):
    """Edge-replicated moving average along the time axis of (B, T, F)."""
    half = kernel // 2
    padded = np.concatenate(
        [np.repeat(values[:, :1], half, axis=1), values,
         np.repeat(values[:, -1:], half, axis=1)],
        axis=1,
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel, axis=1)
    return windows.mean(axis=-1)


class DLinearBaseline(nn.Module):
    """Trend/residual decomposition variant: moving-average trend and
    residual each get their own step map, summed at the output."""

    def __init__(self, rng, steps_in=24, steps_out=TARGET_HOURS, kernel=MA_KERNEL):
        self.trend_map = LinearBaseline(rng, steps_in, steps_out)
        self.resid_map = LinearBaseline(rng, steps_in, steps_out)
        self.kernel = kernel

    def forward(self, obs_values):
        values = obs_values.data if isinstance(obs_values, Tensor) else np.asarray(obs_values)
        trend = moving_average_trend(values, self.kernel)
        resid = values - trend
        return self.trend_map.forward(Tensor(trend)) + self.resid_map.forward(Tensor(resid))
