"""Kernel dispatch: compiled fused loops when available, numpy otherwise.

The backend is chosen once at import time.  Set ``CLINICAST_PURE=1`` in the
environment to force the numpy fallback; tests and the kernel benchmark use
:func:`set_backend` to flip between the two in-process.
"""

import os

from . import _pure

try:
    from . import _fused
except ImportError:
    _fused = None

_ACTIVE = {"name": "pure", "mod": _pure}


def available_backends():
    names = ["pure"]
    if _fused is not None:
        names.append("fused")
    return names


def set_backend(name):
    if name == "pure":
        _ACTIVE.update(name="pure", mod=_pure)
    elif name == "fused":
        if _fused is None:
            raise RuntimeError("fused kernels are not compiled in this install")
        _ACTIVE.update(name="fused", mod=_fused)
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def backend():
    return _ACTIVE["name"]


def _rows(x):
    import numpy as np

    return np.ascontiguousarray(x.reshape(-1, x.shape[-1]))


def softmax_fwd(x):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.softmax_fwd(x)
    return mod.softmax_fwd(_rows(x)).reshape(x.shape)


def softmax_bwd(y, gy):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.softmax_bwd(y, gy)
    return mod.softmax_bwd(_rows(y), _rows(gy)).reshape(y.shape)


def layernorm_fwd(x, eps):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.layernorm_fwd(x, eps)
    y, inv_std = mod.layernorm_fwd(_rows(x), eps)
    return y.reshape(x.shape), inv_std.reshape(x.shape[:-1] + (1,))


def layernorm_bwd(y, inv_std, gy):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.layernorm_bwd(y, inv_std, gy)
    flat = mod.layernorm_bwd(_rows(y), inv_std.reshape(-1, 1), _rows(gy))
    return flat.reshape(y.shape)


def gelu_fwd(x):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.gelu_fwd(x)
    return mod.gelu_fwd(_rows(x)).reshape(x.shape)


def gelu_bwd(x, gy):
    mod = _ACTIVE["mod"]
    if mod is _pure:
        return mod.gelu_bwd(x, gy)
    return mod.gelu_bwd(_rows(x), _rows(gy)).reshape(x.shape)


if _fused is not None and os.environ.get("CLINICAST_PURE", "") not in ("1", "true"):
    set_backend("fused")
