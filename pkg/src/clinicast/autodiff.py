"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every operation returns a new :class:`Tensor` that records
its parents and a closure mapping the output adjoint to parent adjoints.
``backward()`` replays those closures once in reverse topological order,
so the recorded graph doubles as the tape.  Graphs are rebuilt on every
forward pass, which keeps autoregressive rollouts of varying length
trivially correct.

Everything is float64 and single-threaded by design: the models are small
and gradient-check fidelity matters more than raw speed.  The elementwise
hot spots (softmax, layer norm, gelu) dispatch through
:mod:`clinicast.kernels`, which selects fused compiled loops when the
extension is built.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError

_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling graph recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self.grad = None
        self._parents = _parents if self.requires_grad else ()
        self._vjp = _vjp if self.requires_grad else None
        self.op = op

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- graph management ----------------------------------------------

    def detach(self):
        """Same values, cut off from the recorded graph."""
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, _wrap(1.0 / float(scalar)))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x):
    return Tensor(x)


def _unbroadcast(g, shape):
    """Sum a gradient down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(data, parents, vjp, op):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents), _vjp=vjp, op=op)


# -- arithmetic ------------------------------------------------------------


def add(a, b):
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp, "add")


def sub(a, b):
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), vjp, "sub")


def mul(a, b):
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(out, (a, b), vjp, "mul")


def matmul(a, b):
    """Matrix product with numpy batch broadcasting on leading axes.

    Gradient rules: da = g @ b^T, db = a^T @ g, summed over broadcast axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.data.shape} @ {b.data.shape}"
        )
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(out, (a, b), vjp, "matmul")


# -- shape manipulation -----------------------------------------------------


def reshape(x, shape):
    old = x.data.shape
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(old),)

    return _node(out, (x,), vjp, "reshape")


def transpose(x, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inverse),)

    return _node(out, (x,), vjp, "transpose")


def swapaxes(x, a, b):
    out = np.swapaxes(x.data, a, b)

    def vjp(g):
        return (np.swapaxes(g, a, b),)

    return _node(out, (x,), vjp, "swapaxes")


def concat(tensors, axis):
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _node(out, tensors, vjp, "concat")


def narrow(x, axis, start, length):
    """Contiguous slice ``[start, start+length)`` along one axis."""
    if start < 0 or start + length > x.data.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {x.data.shape}"
        )
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = x.data[index]

    def vjp(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _node(out, (x,), vjp, "narrow")


# -- nonlinearities ----------------------------------------------------------


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0)

    def vjp(g):
        return (g * mask,)

    return _node(out, (x,), vjp, "relu")


def gelu(x):
    out = kernels.gelu_fwd(x.data)

    def vjp(g):
        return (kernels.gelu_bwd(x.data, g),)

    return _node(out, (x,), vjp, "gelu")


def tanh(x):
    out = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _node(out, (x,), vjp, "tanh")


def softmax_lastdim(x):
    """Numerically stabilized softmax over the trailing axis."""
    if x.data.shape[-1] == 0:
        raise ShapeError("softmax over an empty last dimension")
    out = kernels.softmax_fwd(x.data)

    def vjp(g):
        return (kernels.softmax_bwd(out, g),)

    return _node(out, (x,), vjp, "softmax")


def layer_norm(x, eps=1e-5):
    """Normalize the trailing axis to zero mean, unit variance.

    A constant slice maps to zeros (the epsilon sits inside the square
    root), so fully imputed rows stay finite.  Affine gain/bias are
    composed outside this primitive.
    """
    out, inv_std = kernels.layernorm_fwd(x.data, eps)

    def vjp(g):
        return (kernels.layernorm_bwd(out, inv_std, g),)

    return _node(out, (x,), vjp, "layer_norm")


# -- reductions ---------------------------------------------------------------


def mean(x):
    out = x.data.mean()

    def vjp(g):
        return (np.full(x.data.shape, float(g) / x.data.size),)

    return _node(out, (x,), vjp, "mean")


def total(x):
    out = x.data.sum()

    def vjp(g):
        return (np.full(x.data.shape, float(g)),)

    return _node(out, (x,), vjp, "sum")


def mean_axis(x, axis):
    out = x.data.mean(axis=axis)
    n = x.data.shape[axis]

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.data.shape),)

    return _node(out, (x,), vjp, "mean_axis")


def sum_axis(x, axis):
    out = x.data.sum(axis=axis)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.data.shape),)

    return _node(out, (x,), vjp, "sum_axis")


def mse_reduce(pred, gold):
    """Plain mean squared error over all elements."""
    if pred.data.shape != gold.data.shape:
        raise ShapeError(f"mse shapes differ: {pred.data.shape} vs {gold.data.shape}")
    diff = pred.data - gold.data
    out = np.mean(diff * diff)

    def vjp(g):
        scale = 2.0 * float(g) / diff.size
        return scale * diff, -scale * diff

    return _node(out, (pred, gold), vjp, "mse")


# -- lookup --------------------------------------------------------------------


def embedding_lookup(table, ids):
    """Row gather from a (vocab, width) table; ids is an integer ndarray."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.min(initial=0) < 0 or (ids.size and ids.max() >= table.data.shape[0]):
        raise ShapeError("embedding id out of range")
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _node(out, (table,), vjp, "embedding")


def dropout(x, rate, rng):
    """Inverted dropout with an explicitly seeded generator."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) < keep) / keep
    return mul(x, Tensor(mask))
