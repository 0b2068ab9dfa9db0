"""Transformer building blocks on top of the autodiff tensor core.

Post-norm residual blocks in the style of the original encoder/decoder
architecture, all float64.  Dropout only fires when the caller passes a
generator to ``forward`` (training); inference passes ``rng=None`` and is
fully deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


def glorot(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def sinusoidal_positions(length, width):
    """Fixed sin/cos position table of shape (length, width)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(width, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * (i // 2) / width)
    table = np.empty((length, width))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


class Module:
    """Minimal container with deterministic parameter traversal."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ConfigError(
                f"parameter name mismatch (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for name, p in own.items():
            if p.data.shape != state[name].shape:
                raise ConfigError(
                    f"shape mismatch for {name}: {p.data.shape} vs {state[name].shape}"
                )
            p.data = np.array(state[name], dtype=np.float64)


def parameter(data):
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, d_in, d_out, rng):
        self.weight = parameter(glorot(rng, d_in, d_out))
        self.bias = parameter(np.zeros(d_out))

    def forward(self, x):
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, width, eps=1e-5):
        self.gain = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))
        self.eps = eps

    def forward(self, x):
        return ad.layer_norm(x, self.eps) * self.gain + self.bias


class MultiHeadAttention(Module):
    """Scaled dot-product attention with 1/sqrt(d_head) scaling.

    ``d_query`` and ``d_kv`` may differ (cross-attention from a decoder
    running at output width into a wider encoder memory); all projections
    land in ``d_model`` and the output returns to ``d_model``.
    """

    # Finite stand-in for -inf: exp() underflows to exactly 0.0 after the
    # max shift, which makes causal masking bit-exact.
    MASK_VALUE = -1e30

    def __init__(self, d_model, heads, rng, d_kv=None, causal=False):
        if d_model % heads != 0:
            raise ConfigError(f"model width {d_model} not divisible by {heads} heads")
        d_kv = d_model if d_kv is None else d_kv
        self.heads = heads
        self.d_head = d_model // heads
        self.causal = causal
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_kv, d_model, rng)
        self.wv = Linear(d_kv, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def _split(self, x, batch, seq):
        x = ad.reshape(x, (batch, seq, self.heads, self.d_head))
        return ad.transpose(x, (0, 2, 1, 3))

    def forward(self, query, kv):
        batch, s_q = query.shape[0], query.shape[1]
        s_k = kv.shape[1]
        q = self._split(self.wq.forward(query), batch, s_q)
        k = self._split(self.wk.forward(kv), batch, s_k)
        v = self._split(self.wv.forward(kv), batch, s_k)
        scores = (q @ ad.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.d_head))
        if self.causal:
            mask = np.triu(np.full((s_q, s_k), self.MASK_VALUE), k=1)
            scores = scores + Tensor(mask)
        weights = ad.softmax_lastdim(scores)
        context = weights @ v
        context = ad.reshape(ad.transpose(context, (0, 2, 1, 3)), (batch, s_q, -1))
        return self.wo.forward(context)


class FeedForward(Module):
    def __init__(self, d_model, d_hidden, rng):
        self.inner = Linear(d_model, d_hidden, rng)
        self.outer = Linear(d_hidden, d_model, rng)

    def forward(self, x):
        return self.outer.forward(ad.relu(self.inner.forward(x)))


def _residual(x, sublayer_out, norm, rate, rng):
    if rng is not None and rate > 0.0:
        sublayer_out = ad.dropout(sublayer_out, rate, rng)
    return norm.forward(x + sublayer_out)


class EncoderBlock(Module):
    def __init__(self, d_model, heads, d_hidden, rng, dropout=0.0):
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_hidden, rng)
        self.norm2 = LayerNorm(d_model)
        self.dropout = dropout

    def forward(self, x, rng=None):
        x = _residual(x, self.attn.forward(x, x), self.norm1, self.dropout, rng)
        return _residual(x, self.ffn.forward(x), self.norm2, self.dropout, rng)


class DecoderBlock(Module):
    """Causal self-attention, cross-attention into memory, feed-forward."""

    def __init__(self, d_model, heads, d_hidden, d_memory, rng, dropout=0.0):
        self.self_attn = MultiHeadAttention(d_model, heads, rng, causal=True)
        self.norm1 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, heads, rng, d_kv=d_memory)
        self.norm2 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_hidden, rng)
        self.norm3 = LayerNorm(d_model)
        self.dropout = dropout

    def forward(self, x, memory, rng=None):
        x = _residual(x, self.self_attn.forward(x, x), self.norm1, self.dropout, rng)
        x = _residual(x, self.cross_attn.forward(x, memory), self.norm2, self.dropout, rng)
        return _residual(x, self.ffn.forward(x), self.norm3, self.dropout, rng)


class CrossOnlyBlock(Module):
    """Cross-attention plus feed-forward, no attention across query rows.

    Used by the direct multi-step decoder: each query row only ever reads
    the encoder memory, so the rows stay mutually independent.
    """

    def __init__(self, d_model, heads, d_hidden, d_memory, rng, dropout=0.0):
        self.cross_attn = MultiHeadAttention(d_model, heads, rng, d_kv=d_memory)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_hidden, rng)
        self.norm2 = LayerNorm(d_model)
        self.dropout = dropout

    def forward(self, x, memory, rng=None):
        x = _residual(x, self.cross_attn.forward(x, memory), self.norm1, self.dropout, rng)
        return _residual(x, self.ffn.forward(x), self.norm2, self.dropout, rng)
