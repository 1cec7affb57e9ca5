"""
Geometry-guided fusion: pooled sigmoid attention, reference points,
uncertainty-weighted deformable attention and path fusion.
"""

import math

import numpy as np
import pytest

from wrcfusion.bench import loglog_slope
from wrcfusion.core import functional as F
from wrcfusion.core.gradcheck import gradcheck
from wrcfusion.core.profiler import count_macs
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError, ContractError, DimensionError
from wrcfusion.models.gpf import (
    DeformableUncertainAttention,
    GeometrySemanticAlignment,
    GSAConfig,
    PathFusion,
    QueryState,
    ReferenceGenerator,
    combine_samples,
    deformable_uncertain_attention,
    dense_attention_op_count,
    fuse_paths,
    gen_reference_points,
    gsa_attention,
    gsa_forward,
    gsa_op_count,
    make_anchor_grid,
)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def two_step_oracle(q, k, v, a, b):
    d = q.shape[1]
    s = sigmoid(a @ k.T / math.sqrt(d) + b) @ v
    return sigmoid(q @ a.T / math.sqrt(d) + b) @ s


def test_gsa_matches_two_step_oracle(rng):
    q, k, v, a = (rng.normal(size=shape) for shape in ((20, 8), (12, 8), (12, 8), (5, 8)))
    b = -math.log(12)
    out = gsa_attention(Tensor(q), Tensor(k), Tensor(v), Tensor(a), b)
    np.testing.assert_allclose(out.data, two_step_oracle(q, k, v, a, b), rtol=1e-12)


def test_gsa_matches_oracle_on_random_sizes():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n_tokens, n_pooled, k_len, d = (int(v) for v in rng.integers(1, 12, size=4))
        q, k, v, a = (rng.normal(size=shape) for shape in ((n_tokens, d), (k_len, d), (k_len, d), (n_pooled, d)))
        b = float(rng.normal())
        out = gsa_attention(Tensor(q), Tensor(k), Tensor(v), Tensor(a), b)
        assert np.max(np.abs(out.data - two_step_oracle(q, k, v, a, b))) < 1e-10


def test_gsa_heads_split_the_embedding(rng):
    q, k, v, a = (rng.normal(size=shape) for shape in ((6, 8), (7, 8), (7, 8), (3, 8)))
    out = gsa_attention(Tensor(q), Tensor(k), Tensor(v), Tensor(a), 0.1, heads=2)
    expected = np.concatenate([two_step_oracle(q[:, s], k[:, s], v[:, s], a[:, s], 0.1)
                               for s in (slice(0, 4), slice(4, 8))], axis=1)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_gsa_mac_count_matches_closed_form(rng):
    n_tokens, n_pooled, k_len, d = 40, 6, 30, 4
    q, k, v, a = (Tensor(rng.normal(size=shape))
                  for shape in ((n_tokens, d), (k_len, d), (k_len, d), (n_pooled, d)))
    with count_macs() as counter:
        gsa_attention(q, k, v, a)
    assert counter.total == gsa_op_count(n_tokens, n_pooled, k_len, d)
    assert gsa_op_count(n_tokens, n_pooled, k_len, d) < dense_attention_op_count(n_tokens, k_len, d)


def test_gsa_cost_grows_at_most_linearly():
    sweep = [256, 512, 1024, 2048, 4096]
    gsa = [gsa_op_count(n, 144, 1024, 64) for n in sweep]
    dense = [dense_attention_op_count(n, 1024, 64) for n in sweep]
    assert loglog_slope(sweep, gsa) < 1.1
    assert loglog_slope(sweep, dense) == pytest.approx(1.0)


def test_gsa_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        gsa_attention(Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(5, 6))),
                      Tensor(rng.normal(size=(5, 6))), Tensor(rng.normal(size=(2, 8))))


def test_alignment_module_output_and_bias(rng):
    gsa = GeometrySemanticAlignment(8, GSAConfig(dim=8, pool=(2, 2), gdc_groups=2), (4, 6), (6, 6), 0, rng)
    assert gsa.bias.data[0] == pytest.approx(-math.log(36))
    tokens = gsa_forward(Tensor(rng.normal(size=(8, 4, 6))), Tensor(rng.normal(size=(8, 6, 6))), gsa)
    assert tokens.shape == (24, 8)
    assert gsa.as_map(tokens).shape == (8, 4, 6)


def test_alignment_rejects_unpooled_grid_unless_allowed(rng):
    with pytest.raises(ConfigurationError):
        GeometrySemanticAlignment(4, GSAConfig(dim=4, pool=(2, 2), gdc_groups=1), (2, 2), (4, 4), 0, rng)
    full = GeometrySemanticAlignment(4, GSAConfig(dim=4, pool=(2, 2), gdc_groups=1, allow_full=True),
                                     (2, 2), (4, 4), 0, rng)
    assert full(Tensor(rng.normal(size=(4, 2, 2))), Tensor(rng.normal(size=(4, 4, 4)))).shape == (4, 4)


def test_alignment_is_differentiable(rng):
    gsa = GeometrySemanticAlignment(2, GSAConfig(dim=2, pool=(1, 2), gdc_groups=1, gdc_dilation=1),
                                    (2, 3), (3, 3), 0, rng)
    f_ea = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
    f_image = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    probe = rng.normal(size=(6, 2))
    assert gradcheck(lambda: F.sum(gsa(f_ea, f_image) * probe), [f_ea, f_image, gsa.bias], rtol=1e-5)


def test_anchor_grid_is_row_major_cell_centres():
    anchors = make_anchor_grid(9)
    assert anchors.shape == (9, 2)
    np.testing.assert_allclose(anchors[0], [1 / 6, 1 / 6])
    np.testing.assert_allclose(anchors[1], [0.5, 1 / 6])
    np.testing.assert_allclose(anchors[-1], [5 / 6, 5 / 6])
    with pytest.raises(ConfigurationError):
        make_anchor_grid(10)


def test_reference_points_start_on_the_anchors(rng):
    generator = ReferenceGenerator(8, 4, 6, 6, rng, pool=2)
    state = gen_reference_points(generator, Tensor(rng.normal(size=(6, 4, 4))), Tensor(rng.normal(size=(6, 2, 4))))
    np.testing.assert_allclose(state.reference.data, make_anchor_grid(4))
    assert state.embedding.shape == (4, 8)
    assert np.all((state.confidence.data > 0) & (state.confidence.data < 1))
    with pytest.raises(ContractError):
        state.mean_uncertainty()


def test_reference_points_reject_wrong_anchor_count(rng):
    generator = ReferenceGenerator(8, 4, 6, 6, rng, pool=2)
    with pytest.raises(ContractError):
        generator(Tensor(rng.normal(size=(6, 4, 4))), Tensor(rng.normal(size=(6, 2, 4))), np.zeros((5, 2)))


def test_combine_samples_matches_einsum(rng):
    values = rng.normal(size=(3, 4, 5))
    weights = rng.uniform(size=(3, 4))
    uncertainty = rng.uniform(size=(3, 4))
    out = combine_samples(Tensor(values), Tensor(weights), Tensor(uncertainty))
    np.testing.assert_allclose(out.data, np.einsum("qm,qm,qmd->qd", weights, uncertainty, values))


def test_deformable_attention_samples_at_reference_before_training(rng):
    attention = DeformableUncertainAttention(4, [3], 2, rng)
    feat = Tensor(rng.normal(size=(3, 4, 4)))
    # centre of cell (row 1, col 2)
    reference = Tensor(np.array([[2.5 / 4, 1.5 / 4]]))
    queries = Tensor(rng.normal(size=(1, 4)))
    out, uncertainty = deformable_uncertain_attention(attention, queries, reference, [feat])
    value = attention.value_proj[0](Tensor(feat.data[:, 1, 2][None, :])).data[0]
    weights = F.softmax(attention.weights(queries), axis=1).data[0]
    expected = value * float(np.sum(weights * uncertainty.data[0]))
    np.testing.assert_allclose(out.data[0], expected, rtol=1e-12)
    assert uncertainty.shape == (1, 2)


def test_deformable_attention_gradients(rng):
    attention = DeformableUncertainAttention(4, [3, 3], 2, rng)
    pyramid = [Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True),
               Tensor(rng.normal(size=(3, 2, 2)), requires_grad=True)]
    queries = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    reference = Tensor(np.array([[0.3, 0.6], [0.55, 0.2]]))
    probe = rng.normal(size=(2, 4))

    def fn():
        out, _ = attention(queries, reference, pyramid)
        return F.sum(out * probe)

    assert gradcheck(fn, [queries, *pyramid], rtol=1e-5)


def test_deformable_attention_level_mismatch(rng):
    attention = DeformableUncertainAttention(4, [3, 3], 2, rng)
    with pytest.raises(ConfigurationError):
        attention(Tensor(rng.normal(size=(1, 4))), Tensor(np.full((1, 2), 0.5)), [Tensor(np.zeros((3, 4, 4)))])
    with pytest.raises(ConfigurationError):
        deformable_uncertain_attention(attention, Tensor(rng.normal(size=(1, 4))), Tensor(np.full((1, 2), 0.5)), [])


def test_path_fusion_projects_back_to_query_width(rng):
    fusion = PathFusion(4, rng)
    f_gs, f_ra = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    out = fuse_paths(Tensor(f_gs), Tensor(f_ra), fusion)
    expected = np.concatenate([f_gs, f_ra], axis=1) @ fusion.proj.weight.data + fusion.proj.bias.data
    np.testing.assert_allclose(out.data, expected)
    with pytest.raises(DimensionError):
        fuse_paths(Tensor(f_gs), Tensor(rng.normal(size=(3, 5))), fusion)


def test_path_fusion_is_a_single_projection(rng):
    fusion = PathFusion(4, rng)
    assert [name for name, _ in fusion.named_parameters()] == ["proj.weight", "proj.bias"]
    fusion.proj.weight.data[...] = 0.0
    fusion.proj.bias.data[...] = [1.0, -2.0, 0.5, 3.0]
    out = fuse_paths(Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(2, 4))), fusion)
    np.testing.assert_allclose(out.data, [[1.0, -2.0, 0.5, 3.0]] * 2)


def test_query_state_mean_uncertainty(rng):
    state = QueryState(Tensor(np.zeros((2, 4))), make_anchor_grid(4)[:2], Tensor(np.zeros((2, 2))),
                       Tensor(np.full(2, 0.5)), Tensor(np.array([[0.2, 0.4], [1.0, 0.0]])))
    np.testing.assert_allclose(state.mean_uncertainty(), [0.3, 0.5])
