"""Input encoders: sparse triplet (set-function) path and dense binned path.

The triplet path embeds each (time, variable, value) observation as the
sum of three width-m embeddings and runs a bidirectional transformer
without positional encoding over the observation axis, so the memory is
permutation-equivariant in the triplets.  Static features enter the set
as pseudo-triplets at t=0.

The dense path projects hourly rows [values | mask | statics] to model
width, adds fixed sinusoidal positions over the hour axis, and runs the
same encoder stack; row order is therefore informative.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .data import OBS_HOURS
from .errors import DataError, WindowError


class ScalarEmbed(nn.Module):
    """Affine map of one scalar to width m, then tanh.

    The continuous analog of a lookup table, used for observation times
    and values.
    """

    def __init__(self, width, rng):
        self.proj = nn.Linear(1, width, rng)

    def forward(self, x):
        return ad.tanh(self.proj.forward(x))


class TripletEncoder(nn.Module):
    def __init__(self, n_variables, width, heads, layers, hidden, rng, dropout=0.0):
        self.time_embed = ScalarEmbed(width, rng)
        self.value_embed = ScalarEmbed(width, rng)
        self.var_embed = nn.parameter(
            rng.normal(0.0, 0.05, size=(n_variables, width))
        )
        self.blocks = [
            nn.EncoderBlock(width, heads, hidden, rng, dropout) for _ in range(layers)
        ]
        self.width = width

    def forward(self, times, var_ids, values, rng=None):
        """Encode one observation set.

        times: (n,) array, var_ids: (n,) int array, values: (n,) array or
        Tensor.  Returns an (1, n, width) memory.
        """
        n = len(var_ids)
        if n == 0:
            raise DataError("cannot encode an empty observation set")
        t_col = Tensor(np.asarray(times, dtype=np.float64).reshape(n, 1))
        if not isinstance(values, Tensor):
            values = Tensor(np.asarray(values, dtype=np.float64))
        v_col = ad.reshape(values, (n, 1))
        summed = (
            self.time_embed.forward(t_col)
            + self.value_embed.forward(v_col)
            + ad.embedding_lookup(self.var_embed, np.asarray(var_ids, dtype=np.intp))
        )
        x = ad.reshape(summed, (1, n, self.width))
        for block in self.blocks:
            x = block.forward(x, rng=rng)
        return x


class DenseEncoder(nn.Module):
    def __init__(self, n_variables, n_statics, width, heads, layers, hidden, rng,
                 dropout=0.0, hours=OBS_HOURS):
        self.input_proj = nn.Linear(2 * n_variables + n_statics, width, rng)
        self.positions = Tensor(nn.sinusoidal_positions(hours, width))
        self.blocks = [
            nn.EncoderBlock(width, heads, hidden, rng, dropout) for _ in range(layers)
        ]
        self.hours = hours
        self.width = width

    def forward(self, rows, rng=None):
        """Encode (batch, hours, 2|F|+|S|) rows into (batch, hours, width)."""
        if rows.shape[1] != self.hours:
            raise WindowError(f"expected {self.hours} hourly rows, got {rows.shape[1]}")
        if not isinstance(rows, Tensor):
            rows = Tensor(rows)
        x = self.input_proj.forward(rows) + self.positions
        for block in self.blocks:
            x = block.forward(x, rng=rng)
        return x


def dense_input_rows(obs_values, obs_mask, statics):
    """Assemble [values | mask | statics] rows for the dense encoder.

    obs_values/obs_mask: (batch, hours, |F|); statics: (batch, |S|),
    broadcast to every hour.
    """
    batch, hours, _ = obs_values.shape
    stat = np.broadcast_to(statics[:, None, :], (batch, hours, statics.shape[1]))
    return np.concatenate([obs_values, obs_mask, stat], axis=2)


class SofaRegressionHead(nn.Module):
    """Mean-pool the memory and map to one scalar severity score."""

    def __init__(self, width, rng):
        self.out = nn.Linear(width, 1, rng)

    def forward(self, memory):
        pooled = ad.mean_axis(memory, 1)
        return ad.reshape(self.out.forward(pooled), (memory.shape[0],))
