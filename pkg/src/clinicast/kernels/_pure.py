"""Pure numpy implementations of the hot inner-loop kernels.

Every function operates on C-contiguous float64 arrays whose trailing
dimension is the reduction axis; callers flatten leading dimensions to
(rows, cols) before dispatch.  The compiled sibling (`_fused`) implements
the same contracts with fused loops; both must agree numerically.
"""

import numpy as np
from scipy.special import erf

INV_SQRT2 = 0.7071067811865476
INV_SQRT_2PI = 0.3989422804014327


def softmax_fwd(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def softmax_bwd(y, gy):
    dot = (gy * y).sum(axis=-1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x, eps):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return centered * inv_std, inv_std


def layernorm_bwd(y, inv_std, gy):
    d = y.shape[-1]
    g_mean = gy.mean(axis=-1, keepdims=True)
    gy_dot_y = (gy * y).sum(axis=-1, keepdims=True) / d
    return inv_std * (gy - g_mean - y * gy_dot_y)


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * INV_SQRT2))


def gelu_bwd(x, gy):
    cdf = 0.5 * (1.0 + erf(x * INV_SQRT2))
    pdf = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return gy * (cdf + x * pdf)
