"""
Autodiff core: kernels against finite differences, optimizer, profiler and checkpoints.
"""

import math

import numpy as np
import pytest

from wrcfusion.core import functional as F
from wrcfusion.core.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from wrcfusion.core.gradcheck import gradcheck, gradient_errors
from wrcfusion.core.nn import Conv2d, LayerNorm, Linear, Module, Parameter
from wrcfusion.core.optim import AdamW, adamw_step, cosine_lr
from wrcfusion.core.profiler import count_macs, mac_scope
from wrcfusion.core.tensor import Tensor, no_grad
from wrcfusion.errors import (
    CheckpointMismatchError,
    ConfigurationError,
    ContractError,
    DimensionError,
    FormatError,
    NumericError,
)


def test_elementwise_and_broadcast_gradients(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    assert gradcheck(lambda: F.sum((a * b + F.exp(a) / (1.0 + b * b) - F.sigmoid(a)) * w), [a, b], rtol=1e-6)


def test_softmax_layer_norm_and_log_softmax_gradients(rng):
    x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    gain = Tensor(rng.normal(size=5), requires_grad=True)
    shift = Tensor(rng.normal(size=5), requires_grad=True)
    w = rng.normal(size=(4, 5))
    assert gradcheck(lambda: F.sum(F.softmax(x, axis=1) * w), [x])
    assert gradcheck(lambda: F.sum(F.log_softmax(x, axis=0) * w), [x])
    assert gradcheck(lambda: F.sum(F.layer_norm(x, gain, shift) * w), [x, gain, shift], rtol=1e-5)


def test_advanced_index_accumulates_repeated_rows(rng):
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    out = F.sum(x[np.array([0, 2, 2, 3])])
    out.backward()
    np.testing.assert_allclose(x.grad[:, 0], [1.0, 0.0, 2.0, 1.0])


def test_conv2d_gradients_with_stride_dilation_and_groups(rng):
    x = Tensor(rng.normal(size=(4, 7, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(6, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=6), requires_grad=True)
    probe = rng.normal(size=(6, 4, 3))

    def fn():
        out = F.conv2d(x, w, b, stride=2, padding=2, dilation=2, groups=2)
        return F.sum(out * probe)

    assert F.conv2d(x, w, b, stride=2, padding=2, dilation=2, groups=2).shape == (6, 4, 3)
    assert max(gradient_errors(fn, [x, w, b])) < 1e-6


def test_conv2d_matches_direct_sum(rng):
    x = rng.normal(size=(2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    out = F.conv2d(Tensor(x), Tensor(w), padding=1).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    expected = np.zeros((3, 5, 5))
    for o in range(3):
        for i in range(5):
            for j in range(5):
                expected[o, i, j] = np.sum(w[o] * xp[:, i:i + 3, j:j + 3])
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_conv2d_rejects_bad_groups(rng):
    with pytest.raises(ConfigurationError):
        F.conv2d(Tensor(rng.normal(size=(3, 5, 5))), Tensor(rng.normal(size=(4, 1, 3, 3))), groups=2)
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(rng.normal(size=(1, 2, 2))), Tensor(rng.normal(size=(1, 1, 3, 3))))


def test_adaptive_max_pool_values_and_gradient(rng):
    x = Tensor(rng.normal(size=(2, 5, 7)), requires_grad=True)
    out = F.adaptive_max_pool2d(x, 2, 3)
    assert out.shape == (2, 2, 3)
    # window (0, 0) spans rows 0..2 and cols 0..2
    assert out.data[1, 0, 0] == pytest.approx(x.data[1, 0:3, 0:3].max())
    probe = rng.normal(size=(2, 2, 3))
    assert gradcheck(lambda: F.sum(F.adaptive_max_pool2d(x, 2, 3) * probe), [x], rtol=1e-6)
    with pytest.raises(ConfigurationError):
        F.adaptive_max_pool2d(x, 6, 3)


def test_bilinear_sample_hits_cell_centres_and_is_differentiable(rng):
    feat = Tensor(rng.normal(size=(3, 4, 5)), requires_grad=True)
    centre = Tensor(np.array([[(2 + 0.5) / 5, (1 + 0.5) / 4]]))
    np.testing.assert_allclose(F.bilinear_sample(feat, centre).data[0], feat.data[:, 1, 2])

    points = Tensor(rng.uniform(0.2, 0.8, size=(6, 2)), requires_grad=True)
    probe = rng.normal(size=(6, 3))
    assert gradcheck(lambda: F.sum(F.bilinear_sample(feat, points) * probe), [feat, points], rtol=1e-5)


def test_bilinear_sample_rejects_nan_points():
    with pytest.raises(NumericError):
        F.bilinear_sample(np.zeros((1, 2, 2)), np.array([[np.nan, 0.5]]))


def test_upsample_nearest_gradient(rng):
    x = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    probe = rng.normal(size=(2, 5, 6))
    assert gradcheck(lambda: F.sum(F.upsample_nearest(x, (5, 6)) * probe), [x])


def test_backward_twice_is_a_contract_error(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    loss = F.sum(x * x)
    loss.backward()
    with pytest.raises(ContractError):
        loss.backward()


def test_no_grad_records_no_graph(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert y.is_leaf and not y.requires_grad


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 100, 1e-4) == pytest.approx(1e-4)
    assert cosine_lr(50, 100, 1e-4) == pytest.approx(5e-5)
    assert cosine_lr(100, 100, 1e-4, floor=1e-6) == pytest.approx(1e-6)
    with pytest.raises(ConfigurationError):
        cosine_lr(0, 0, 1e-4)


def test_adamw_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -3.0])
    adamw_step([p], lr=0.1, step=1, weight_decay=0.0)
    # bias-corrected first step is lr * sign(g)
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)


def test_adamw_requires_gradients():
    with pytest.raises(ContractError):
        adamw_step([Parameter(np.zeros(2))], lr=0.1, step=1)


def test_adamw_minimizes_a_quadratic():
    p = Parameter(np.array([3.0, -4.0]))
    opt = AdamW([p], lr=0.1, weight_decay=0.0, grad_clip=1.0)
    for step in range(300):
        opt.zero_grad()
        loss = F.sum(p * p)
        loss.backward()
        opt.step(cosine_lr(step, 300, 0.1))
    assert np.linalg.norm(p.data) < 0.1


def test_mac_counter_counts_matmul_and_conv(rng):
    with count_macs() as counter:
        F.matmul(Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(3, 4))))
        with mac_scope("conv"):
            F.conv2d(Tensor(rng.normal(size=(2, 5, 5))), Tensor(rng.normal(size=(3, 2, 3, 3))), padding=1)
    assert counter["default"] == 2 * 3 * 4
    assert counter["conv"] == 3 * 5 * 5 * 2 * 3 * 3
    assert counter.total == 24 + 1350


class TinyNet(Module):
    def __init__(self, rng, width=4):
        super().__init__()
        self.conv = Conv2d(2, width, 3, rng, padding=1)
        self.norm = LayerNorm(width)
        self.fc = Linear(width, 3, rng)

    def forward(self, x):
        h = F.mean(F.relu(self.conv(x)), axis=(1, 2))
        return self.fc(self.norm(h))


def test_checkpoint_restores_outputs(tmp_path, rng):
    net = TinyNet(rng)
    x = Tensor(rng.normal(size=(2, 6, 6)))
    expected = net(x).data.copy()
    path = tmp_path / "tiny.wrcf"
    save_checkpoint(net, str(path))

    other = TinyNet(np.random.default_rng(99))
    assert not np.allclose(other(x).data, expected)
    load_checkpoint(other, str(path))
    np.testing.assert_array_equal(other(x).data, expected)
    assert set(read_checkpoint(str(path))) == {name for name, _ in net.named_parameters()}


def test_checkpoint_shape_mismatch(tmp_path, rng):
    path = tmp_path / "tiny.wrcf"
    save_checkpoint(TinyNet(rng, width=4), str(path))
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(TinyNet(rng, width=5), str(path))


def test_truncated_checkpoint_reports_offset(tmp_path, rng):
    path = tmp_path / "tiny.wrcf"
    save_checkpoint(TinyNet(rng), str(path))
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(FormatError) as info:
        load_checkpoint(TinyNet(rng), str(path))
    assert info.value.offset is not None


def test_linear_zero_init_outputs_zero(rng):
    layer = Linear(5, 3, rng, zero_init=True)
    assert np.all(layer(Tensor(rng.normal(size=(2, 5)))).data == 0.0)
    assert math.isclose(float(np.sum(layer.weight.data)), 0.0)
