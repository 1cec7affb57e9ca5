"""
WA-MoE block and the feature pyramid hosting it.
"""

import numpy as np
import pytest

from wrcfusion.core import functional as F
from wrcfusion.core.gradcheck import gradcheck
from wrcfusion.core.profiler import count_macs
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError, DimensionError
from wrcfusion.models.fpn import FPN, FPNConfig
from wrcfusion.models.wa_moe import WAMoEBlock, WAMoEConfig, expert_forward, wa_moe_forward, wa_moe_param_count


def test_zero_initialized_block_is_exact_identity(rng):
    block = WAMoEBlock(WAMoEConfig(channels=4, zero_init=True), rng)
    x = Tensor(rng.normal(size=(4, 8, 6)))
    out = wa_moe_forward(x, block)
    assert np.array_equal(out.data, x.data)


@pytest.mark.parametrize("size", [(8, 8), (9, 7), (4, 4)])
def test_block_preserves_shape(rng, size):
    block = WAMoEBlock(WAMoEConfig(channels=2, num_experts=3, top_k=2, branch2_groups=2), rng)
    out = block(Tensor(rng.normal(size=(2,) + size)))
    assert out.shape == (2,) + size
    assert np.all(np.isfinite(out.data))


def test_gate_keeps_top_k_experts_per_location(rng):
    cfg = WAMoEConfig(channels=2, num_experts=4, top_k=2, branch2_groups=2)
    block = WAMoEBlock(cfg, rng)
    block(Tensor(rng.normal(size=(2, 8, 8))))
    weights = block.last_gate.weights.data
    assert weights.shape == (4, 4, 4)
    np.testing.assert_allclose(weights.sum(axis=0), 1.0)
    assert np.all((weights > 0).sum(axis=0) == 2)
    # the recorded experts are the ones carrying weight
    chosen = np.take_along_axis(weights, block.last_gate.active, axis=0)
    assert np.all(chosen > 0)


def test_gate_temperature_sharpens_weights(rng):
    x = Tensor(rng.normal(size=(2, 8, 8)))
    spread = []
    for temperature in (4.0, 0.25):
        block = WAMoEBlock(WAMoEConfig(channels=2, num_experts=3, top_k=3, branch2_groups=2,
                                       temperature=temperature), np.random.default_rng(0))
        block(x)
        spread.append(block.last_gate.weights.data.max(axis=0).mean())
    assert spread[1] > spread[0]


@pytest.mark.parametrize("cfg", [
    WAMoEConfig(channels=4),
    WAMoEConfig(channels=2, num_experts=3, top_k=1, expert_hidden=5, branch2_groups=8),
])
def test_parameter_count_matches_closed_form(rng, cfg):
    assert WAMoEBlock(cfg, rng).num_parameters() == wa_moe_param_count(cfg)


def test_block_is_differentiable(rng):
    cfg = WAMoEConfig(channels=1, num_experts=2, top_k=2, branch2_groups=1)
    block = WAMoEBlock(cfg, rng)
    x = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    probe = rng.normal(size=(1, 4, 4))
    assert gradcheck(lambda: F.sum(block(x) * probe), [x], rtol=1e-5)


def test_unrouted_experts_receive_no_gradient(rng):
    cfg = WAMoEConfig(channels=1, num_experts=4, top_k=1, branch2_groups=1)
    block = WAMoEBlock(cfg, rng)
    x = Tensor(rng.normal(size=(1, 4, 4)))
    F.sum(block(x)).backward()
    routed = set(np.unique(block.last_gate.active).tolist())
    for index, expert in enumerate(block.experts):
        grads = [p.grad for p in expert.parameters()]
        if index in routed:
            assert all(g is not None for g in grads)
        else:
            assert all(g is None for g in grads)


def test_block_macs_are_scoped(rng):
    block = WAMoEBlock(WAMoEConfig(channels=2, branch2_groups=2), rng)
    with count_macs() as counter:
        block(Tensor(rng.normal(size=(2, 8, 8))))
    assert counter["wa_moe"] > 0
    assert counter.total == counter["wa_moe"]


def test_invalid_configurations(rng):
    with pytest.raises(ConfigurationError):
        WAMoEConfig(channels=2, num_experts=2, top_k=3)
    with pytest.raises(ConfigurationError):
        WAMoEConfig(channels=1, branch2_groups=3)
    with pytest.raises(ConfigurationError):
        WAMoEConfig(temperature=0.0)
    block = WAMoEBlock(WAMoEConfig(channels=2, num_experts=2, top_k=1, branch2_groups=2), rng)
    with pytest.raises(DimensionError):
        block(Tensor(rng.normal(size=(2, 3, 8))))
    with pytest.raises(DimensionError):
        block(Tensor(rng.normal(size=(3, 8, 8))))
    with pytest.raises(ConfigurationError):
        expert_forward(block, Tensor(rng.normal(size=(8, 4, 4))), 2)


def _levels(rng, widths=(4, 8), size=(8, 8)):
    h, w = size
    out = []
    for c in widths:
        out.append(Tensor(rng.normal(size=(c, h, w))))
        h, w = -(-h // 2), -(-w // 2)
    return out


def test_pyramid_output_shapes(rng):
    cfg = FPNConfig(in_widths=(4, 8), widths=(6, 12))
    fpn = FPN(cfg, WAMoEConfig(branch2_groups=2), rng)
    pyramid = fpn.pyramid(_levels(rng))
    assert [t.shape for t in pyramid.outputs] == [(6, 8, 8), (12, 4, 4)]


def test_pyramid_without_blocks_or_skip(rng):
    levels = _levels(rng)
    fpn = FPN(FPNConfig(in_widths=(4, 8), widths=(4, 4), use_wa_moe=False, skip=False), WAMoEConfig(), rng)
    pyramid = fpn.pyramid(levels)
    for merged, block, out in zip(pyramid.merged, pyramid.blocks, pyramid.outputs):
        assert block is merged and out is block
    # the coarse level has nothing above it
    top = fpn.laterals[1](levels[1])
    np.testing.assert_allclose(pyramid.merged[1].data, top.data)


def test_zero_initialized_pyramid_blocks_pass_maps_through(rng):
    levels = _levels(rng, widths=(4, 4))
    moe = WAMoEConfig(num_experts=2, top_k=1, branch2_groups=2, zero_init=True)
    fpn = FPN(FPNConfig(in_widths=(4, 4), widths=(4, 4), skip=False), moe, rng)
    pyramid = fpn.pyramid(levels)
    for merged, block in zip(pyramid.merged, pyramid.blocks):
        assert np.array_equal(merged.data, block.data)


def test_pyramid_rejects_sizes_that_do_not_halve(rng):
    fpn = FPN(FPNConfig(in_widths=(4, 8), widths=(4, 8), use_wa_moe=False), WAMoEConfig(), rng)
    with pytest.raises(ConfigurationError):
        fpn([Tensor(rng.normal(size=(4, 8, 8))), Tensor(rng.normal(size=(8, 8, 8)))])
