"""Tensor-core unit tests: forward semantics and gradient correctness."""

import numpy as np
import pytest

from clinicast import autodiff as ad
from clinicast import kernels
from clinicast.autodiff import Tensor
from clinicast.errors import ShapeError
from helpers import assert_grad_matches, numerical_grad, rel_error

RNG = np.random.default_rng(20240811)


def rand(*shape, scale=2.0):
    return RNG.uniform(-scale, scale, size=shape)


def test_matmul_identity():
    eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
    m = Tensor([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal((eye @ m).data, m.data)


def test_matmul_hand_arithmetic():
    out = Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])
    assert out.data.tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(rand(2, 3)) @ Tensor(rand(2, 3))


def test_matmul_grad_matches_finite_differences():
    a = Tensor(rand(3, 3), requires_grad=True)
    b = Tensor(rand(3, 3), requires_grad=True)
    assert_grad_matches(lambda: ad.total(a @ b), [a, b], tol=1e-6)


def test_matmul_batched_broadcast_grad():
    a = Tensor(rand(4, 2, 3), requires_grad=True)
    b = Tensor(rand(3, 5), requires_grad=True)  # broadcast over the batch
    assert_grad_matches(lambda: ad.mean(a @ b), [a, b], tol=1e-6)


def test_softmax_symmetry():
    out = ad.softmax_lastdim(Tensor([0.0, 0.0]))
    assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)
    assert abs(out.data.sum() - 1.0) <= 1e-12


def test_softmax_overflow_stability():
    out = ad.softmax_lastdim(Tensor([1000.0, 0.0]))
    assert np.isfinite(out.data).all()
    assert out.data[0] == pytest.approx(1.0, abs=1e-12)
    assert out.data[1] == pytest.approx(0.0, abs=1e-12)


def test_softmax_nan_propagates():
    out = ad.softmax_lastdim(Tensor([np.nan, 0.0]))
    assert np.isnan(out.data).any()


def test_softmax_grad():
    x = Tensor(rand(4), requires_grad=True)
    weights = Tensor(rand(4))
    assert_grad_matches(
        lambda: ad.total(ad.softmax_lastdim(x) * weights), [x], tol=1e-6
    )


def test_layer_norm_constant_rows_map_to_zero():
    out = ad.layer_norm(Tensor([[5.0, 5.0, 5.0], [0.0, 0.0, 0.0]]))
    assert np.array_equal(out.data, np.zeros((2, 3)))


def test_layer_norm_normalizes():
    x = Tensor(rand(6, 8))
    out = ad.layer_norm(x).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=-1), 1.0, atol=1e-4)  # eps-shrunk


def test_mse_identical_inputs():
    assert ad.mse_reduce(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0


def test_mean_grad_is_uniform():
    x = Tensor(rand(10), requires_grad=True)
    ad.mean(x).backward()
    assert np.allclose(x.grad, np.full(10, 0.1), atol=1e-15)


@pytest.mark.parametrize(
    "name,build",
    [
        ("relu", lambda x, aux: ad.relu(x)),
        ("gelu", lambda x, aux: ad.gelu(x)),
        ("tanh", lambda x, aux: ad.tanh(x)),
        ("layer_norm", lambda x, aux: ad.layer_norm(x)),
        ("softmax", lambda x, aux: ad.softmax_lastdim(x)),
        ("add", lambda x, aux: x + aux),
        ("mul", lambda x, aux: x * aux),
        ("sub", lambda x, aux: aux - x),
        ("reshape", lambda x, aux: ad.reshape(x, (7, 5))),
        ("swapaxes", lambda x, aux: ad.swapaxes(x, 0, 1)),
        ("narrow", lambda x, aux: ad.narrow(x, 1, 2, 3)),
        ("mean_axis", lambda x, aux: ad.mean_axis(x, 1)),
        ("sum_axis", lambda x, aux: ad.sum_axis(x, 0)),
    ],
)
def test_primitive_gradients(name, build):
    # relu needs inputs away from the kink for finite differences
    data = rand(5, 7)
    data[np.abs(data) < 1e-3] += 0.01
    x = Tensor(data, requires_grad=True)
    aux = Tensor(rand(5, 7))
    probe = Tensor(rand(*build(Tensor(data), aux).shape))
    assert_grad_matches(lambda: ad.total(build(x, aux) * probe), [x], tol=1e-4)


def test_concat_grad():
    a = Tensor(rand(3, 2), requires_grad=True)
    b = Tensor(rand(3, 4), requires_grad=True)
    probe = Tensor(rand(3, 6))
    assert_grad_matches(
        lambda: ad.total(ad.concat([a, b], axis=1) * probe), [a, b], tol=1e-6
    )


def test_embedding_grad_scatter():
    table = Tensor(rand(6, 3), requires_grad=True)
    ids = np.array([0, 2, 2, 5])
    probe = Tensor(rand(4, 3))
    assert_grad_matches(
        lambda: ad.total(ad.embedding_lookup(table, ids) * probe), [table], tol=1e-6
    )


def test_broadcast_bias_grad():
    x = Tensor(rand(4, 6), requires_grad=True)
    bias = Tensor(rand(6), requires_grad=True)
    assert_grad_matches(lambda: ad.total(ad.tanh(x + bias)), [x, bias], tol=1e-5)


def test_forward_determinism():
    x = Tensor(rand(8, 8))

    def forward():
        return ad.total(ad.softmax_lastdim(ad.layer_norm(x @ x))).item()

    assert forward() == forward()


def test_detach_blocks_gradient():
    x = Tensor(rand(3, 3), requires_grad=True)
    y = x * Tensor(2.0)
    loss = ad.total(y.detach() * y.detach())
    assert not loss.requires_grad
    combined = ad.total(y.detach() + y)
    combined.backward()
    # only the live branch contributes
    assert np.allclose(x.grad, np.full((3, 3), 2.0))


def test_chained_rollout_backward_reaches_earlier_steps():
    # output of step t fed into step t+1: gradients must flow back
    w = Tensor(rand(2, 2), requires_grad=True)
    state = Tensor(rand(1, 2))
    step1 = ad.tanh(state @ w)
    step2 = ad.tanh(step1 @ w)
    ad.total(step2 * step2).backward()
    assert np.abs(w.grad).min() >= 0.0
    assert np.abs(w.grad).sum() > 0.0
    assert step1.grad is not None and np.abs(step1.grad).sum() > 0.0


def test_no_grad_mode():
    x = Tensor(rand(2, 2), requires_grad=True)
    with ad.no_grad():
        y = x @ x
    assert not y.requires_grad


def test_backward_requires_scalar():
    x = Tensor(rand(2, 2), requires_grad=True)
    with pytest.raises(ShapeError):
        (x @ x).backward()


@pytest.mark.skipif(
    "fused" not in kernels.available_backends(), reason="compiled kernels not built"
)
def test_kernel_backends_agree():
    previous = kernels.backend()
    x = rand(40, 17)
    gy = rand(40, 17)
    try:
        outputs = {}
        for name in ("pure", "fused"):
            kernels.set_backend(name)
            y = kernels.softmax_fwd(x)
            ln, inv = kernels.layernorm_fwd(x, 1e-5)
            outputs[name] = (
                y,
                kernels.softmax_bwd(y, gy),
                ln,
                kernels.layernorm_bwd(ln, inv, gy),
                kernels.gelu_fwd(x),
                kernels.gelu_bwd(x, gy),
            )
        for a, b in zip(outputs["pure"], outputs["fused"]):
            assert rel_error(a, b) < 1e-13
    finally:
        kernels.set_backend(previous)


def test_numerical_grad_helper_sanity():
    # the oracle itself: d/dx sum(x^2) = 2x
    x = rand(3, 3)
    grad = numerical_grad(lambda: float(np.sum(x * x)), x)
    assert rel_error(grad, 2 * x) < 1e-8
