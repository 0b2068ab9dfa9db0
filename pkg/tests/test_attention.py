"""Multi-head attention: shapes, causality, and full-layer gradients."""

import numpy as np
import pytest

from clinicast import autodiff as ad
from clinicast.autodiff import Tensor
from clinicast.errors import ConfigError
from clinicast.nn import EncoderBlock, MultiHeadAttention
from helpers import assert_grad_matches

RNG = np.random.default_rng(77)


def test_single_position_attention_weight_is_one():
    # one row attending to itself: context equals its own value projection
    attn = MultiHeadAttention(6, 1, np.random.default_rng(3))
    row = Tensor(RNG.normal(size=(1, 1, 6)))
    out = attn.forward(row, row)
    values = attn.wv.forward(row)
    expected = attn.wo.forward(values)
    assert np.allclose(out.data, expected.data, atol=1e-12)


def test_head_split_must_divide_width():
    with pytest.raises(ConfigError):
        MultiHeadAttention(10, 3, np.random.default_rng(0))


def test_causal_mask_blocks_future_exactly():
    attn = MultiHeadAttention(8, 2, np.random.default_rng(5), causal=True)
    x = RNG.normal(size=(1, 6, 8))
    base = attn.forward(Tensor(x), Tensor(x)).data.copy()
    for j in range(3, 6):  # perturb positions after t=2
        bumped = x.copy()
        bumped[0, j] += RNG.normal(size=8)
        out = attn.forward(Tensor(bumped), Tensor(bumped)).data
        assert np.array_equal(out[0, :3], base[0, :3]), f"position {j} leaked backward"
        assert not np.array_equal(out[0, j], base[0, j])


def test_non_causal_attention_sees_everything():
    attn = MultiHeadAttention(8, 2, np.random.default_rng(5), causal=False)
    x = RNG.normal(size=(1, 4, 8))
    base = attn.forward(Tensor(x), Tensor(x)).data.copy()
    bumped = x.copy()
    bumped[0, 3] += 1.0
    out = attn.forward(Tensor(bumped), Tensor(bumped)).data
    assert not np.allclose(out[0, 0], base[0, 0])


def test_attention_input_gradient_2x4x8():
    attn = MultiHeadAttention(8, 2, np.random.default_rng(11))
    x = Tensor(RNG.uniform(-2, 2, size=(2, 4, 8)), requires_grad=True)
    probe = Tensor(RNG.normal(size=(2, 4, 8)))
    assert_grad_matches(
        lambda: ad.total(attn.forward(x, x) * probe), [x], tol=1e-5
    )


def test_attention_parameter_gradients():
    attn = MultiHeadAttention(8, 2, np.random.default_rng(11), causal=True)
    x = Tensor(RNG.uniform(-2, 2, size=(2, 4, 8)))
    probe = Tensor(RNG.normal(size=(2, 4, 8)))
    params = [attn.wq.weight, attn.wk.weight, attn.wv.weight, attn.wo.weight, attn.wo.bias]
    assert_grad_matches(
        lambda: ad.total(attn.forward(x, x) * probe), params, tol=1e-5
    )


def test_cross_attention_mixed_widths():
    attn = MultiHeadAttention(4, 1, np.random.default_rng(2), d_kv=10)
    query = Tensor(RNG.normal(size=(3, 5, 4)))
    memory = Tensor(RNG.normal(size=(3, 7, 10)))
    out = attn.forward(query, memory)
    assert out.shape == (3, 5, 4)


def test_encoder_block_grad_through_stack():
    block = EncoderBlock(8, 2, 16, np.random.default_rng(9))
    x = Tensor(RNG.uniform(-1, 1, size=(1, 3, 8)), requires_grad=True)
    probe = Tensor(RNG.normal(size=(1, 3, 8)))
    assert_grad_matches(
        lambda: ad.total(block.forward(x) * probe), [x], tol=1e-4
    )


def test_dropout_only_fires_with_generator():
    block = EncoderBlock(8, 2, 16, np.random.default_rng(9), dropout=0.5)
    x = Tensor(RNG.normal(size=(1, 3, 8)))
    inference_a = block.forward(x).data
    inference_b = block.forward(x).data
    assert np.array_equal(inference_a, inference_b)
    trained = block.forward(x, rng=np.random.default_rng(0)).data
    assert not np.array_equal(trained, inference_a)
