"""
Geometry-Guided Progressive Fusion
Stage 1 aligns image semantics onto the EA grid with pooled sigmoid
attention; stage 2 refines object queries on the RA plane with dual-path
deformable attention whose samples carry learned uncertainty weights.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import Conv2d, LayerNorm, Linear, Module, ModuleList, Parameter
from wrcfusion.core.profiler import mac_scope
from wrcfusion.core.tensor import Tensor, as_tensor
from wrcfusion.errors import ConfigurationError, ContractError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GSAConfig:
    """
    Attributes:
        dim: Embedding dimension d.
        pool: Pooled grid (n_h, n_w) at the finest level; level s uses (n_h >> s, n_w >> s).
        gdc_groups: Groups of the grouped dilated convolutions.
        gdc_dilation: Dilation of the grouped dilated convolutions.
        heads: Attention heads (d must divide evenly).
        allow_full: Permit n = N, the unpooled cross-attention variant.
        bias_init: Initial shared bias b (None = -log of the key count).
    """

    dim: int = 64
    pool: Tuple[int, int] = (8, 8)
    gdc_groups: int = 4
    gdc_dilation: int = 2
    heads: int = 1
    allow_full: bool = False
    bias_init: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads:
            raise ConfigurationError(f"GSA dim {self.dim} must be divisible by heads {self.heads}")
        if min(self.pool) < 1 or self.gdc_groups < 1 or self.gdc_dilation < 1:
            raise ConfigurationError("GSA pool, groups and dilation must be >= 1")

    def pooled_size(self, level: int = 0) -> Tuple[int, int]:
        return max(1, self.pool[0] >> level), max(1, self.pool[1] >> level)


def _flatten(grid: Tensor) -> Tensor:
    """d x H x W -> (H*W) x d."""
    d = grid.shape[0]
    return F.transpose(F.reshape(grid, (d, grid.shape[1] * grid.shape[2])))


def gsa_attention(q: Tensor, k: Tensor, v: Tensor, a: Tensor,
                  bias: Union[Tensor, float] = 0.0, heads: int = 1) -> Tensor:
    """
    Two-step pooled sigmoid attention on flat token matrices.

        S    = sigmoid(A K^T / sqrt(d_h) + b) V        n x d
        F_GS = sigmoid(Q A^T / sqrt(d_h) + b) S        N x d

    Args:
        q: N x d queries.
        k: K_len x d keys.
        v: K_len x d values.
        a: n x d pooled queries.
        bias: Shared scalar b.
        heads: Heads splitting d.

    Returns:
        Tensor: N x d aligned features.
    """
    d = q.shape[1]
    if k.shape[1] != d or v.shape[1] != d or a.shape[1] != d or k.shape[0] != v.shape[0]:
        raise DimensionError(f"gsa_attention shape mismatch: Q {q.shape}, K {k.shape}, V {v.shape}, A {a.shape}")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    outs = []
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        qh, kh, vh, ah = (q, k, v, a) if heads == 1 else (q[:, cols], k[:, cols], v[:, cols], a[:, cols])
        s = F.matmul(F.sigmoid(F.matmul(ah, F.transpose(kh)) * scale + bias), vh)
        outs.append(F.matmul(F.sigmoid(F.matmul(qh, F.transpose(ah)) * scale + bias), s))
    return outs[0] if heads == 1 else F.concat(outs, axis=1)


def gsa_op_count(n_tokens: int, n_pooled: int, k_len: int, dim: int) -> int:
    """Multiply-accumulates of `gsa_attention`: 2 d (n K_len + N n)."""
    if min(n_tokens, n_pooled, k_len, dim) < 1:
        raise ConfigurationError("gsa_op_count arguments must be positive")
    return 2 * dim * (n_pooled * k_len + n_tokens * n_pooled)


def dense_attention_op_count(n_tokens: int, k_len: int, dim: int) -> int:
    """Multiply-accumulates of direct N x K_len cross-attention."""
    return 2 * dim * n_tokens * k_len


class GeometrySemanticAlignment(Module):
    """
    Stage 1 on one pyramid level: EA queries attend to image keys through a
    pooled grid of EA queries.

    Args:
        channels: Channel count of both input maps.
        cfg: Attention configuration.
        ea_size: (H, W) of the EA map.
        image_size: (H, W) of the image map.
        level: Pyramid level (sets the pooled size).
        rng: Initializer.
    """

    def __init__(self, channels: int, cfg: GSAConfig, ea_size: Tuple[int, int],
                 image_size: Tuple[int, int], level: int, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.ea_size = tuple(ea_size)
        self.image_size = tuple(image_size)
        self.pooled = cfg.pooled_size(level)
        n_tokens = ea_size[0] * ea_size[1]
        n_pooled = self.pooled[0] * self.pooled[1]
        if n_pooled > n_tokens or (n_pooled == n_tokens and not cfg.allow_full):
            raise ConfigurationError(f"pooled length n={n_pooled} must be smaller than N={n_tokens} "
                                     f"(set allow_full for the unpooled variant)")
        if self.pooled[0] > ea_size[0] or self.pooled[1] > ea_size[1]:
            raise ConfigurationError(f"pooled grid {self.pooled} exceeds EA grid {tuple(ea_size)}")
        d, dil, groups = cfg.dim, cfg.gdc_dilation, cfg.gdc_groups
        self.q_conv = Conv2d(channels, d, 3, rng, padding=dil, dilation=dil, groups=groups)
        self.k_conv = Conv2d(channels, d, 3, rng, padding=dil, dilation=dil, groups=groups)
        self.v_conv = Conv2d(channels, d, 3, rng, padding=dil, dilation=dil, groups=groups)
        self.pe_q = Parameter(rng.normal(0.0, 0.02, (d,) + self.ea_size))
        self.pe_k = Parameter(rng.normal(0.0, 0.02, (d,) + self.image_size))
        self.pe_v = Parameter(rng.normal(0.0, 0.02, (d,) + self.image_size))
        k_len = image_size[0] * image_size[1]
        init = -math.log(k_len) if cfg.bias_init is None else cfg.bias_init
        self.bias = Parameter(np.array([init]))

    def project(self, f_ea: Tensor, f_image: Tensor) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
        """Q, K, V and pooled A as flat token matrices."""
        if f_ea.shape[1:] != self.ea_size or f_image.shape[1:] != self.image_size:
            raise DimensionError(f"GSA built for EA {self.ea_size} and image {self.image_size}, "
                                 f"got {f_ea.shape[1:]} and {f_image.shape[1:]}")
        q_grid = self.q_conv(f_ea) + self.pe_q
        a = _flatten(F.adaptive_max_pool2d(q_grid, *self.pooled))
        k = _flatten(self.k_conv(f_image) + self.pe_k)
        v = _flatten(self.v_conv(f_image) + self.pe_v)
        return _flatten(q_grid), k, v, a

    def forward(self, f_ea: Tensor, f_image: Tensor) -> Tensor:
        with mac_scope("gsa"):
            q, k, v, a = self.project(f_ea, f_image)
            return gsa_attention(q, k, v, a, self.bias, self.cfg.heads)

    def as_map(self, tokens: Tensor) -> Tensor:
        """N x d tokens back onto the d x H x W EA grid."""
        return F.reshape(F.transpose(tokens), (tokens.shape[1],) + self.ea_size)


def gsa_forward(f_ea: Tensor, f_image: Tensor, gsa: GeometrySemanticAlignment) -> Tensor:
    return gsa(f_ea, f_image)


def make_anchor_grid(num_queries: int) -> np.ndarray:
    """Nq x 2 (u, v) cell centres of a sqrt(Nq) x sqrt(Nq) grid, row-major."""
    side = math.isqrt(num_queries)
    if num_queries < 1 or side * side != num_queries:
        raise ConfigurationError(f"number of queries must be a perfect square, got {num_queries}")
    centres = (np.arange(side) + 0.5) / side
    v, u = np.meshgrid(centres, centres, indexing="ij")
    return np.column_stack([u.reshape(-1), v.reshape(-1)])


@dataclass
class QueryState:
    """
    Batched per-query state; row i belongs to query i.

    Attributes:
        embedding: Nq x d refined embeddings.
        anchor: Nq x 2 anchor points on the RA plane.
        reference: Nq x 2 reference points in [0, 1]^2.
        confidence: Nq reference confidences in (0, 1).
        uncertainty: Nq x M per-sample uncertainty weights over both paths.
    """

    embedding: Tensor
    anchor: np.ndarray
    reference: Tensor
    confidence: Tensor
    uncertainty: Optional[Tensor] = None

    @property
    def num_queries(self) -> int:
        return self.embedding.shape[0]

    def mean_uncertainty(self) -> np.ndarray:
        if self.uncertainty is None:
            raise ContractError("query uncertainties are only known after deformable attention")
        return self.uncertainty.data.mean(axis=1)


class PoolAttention(Module):
    """Single-head cross-attention of queries over a max-pooled feature grid with learned PE."""

    def __init__(self, dim: int, channels: int, pool: int, rng: np.random.Generator):
        super().__init__()
        self.dim, self.pool = dim, pool
        self.key = Linear(channels, dim, rng)
        self.value = Linear(channels, dim, rng)
        self.pe = Parameter(rng.normal(0.0, 0.02, (pool * pool, dim)))

    def forward(self, queries: Tensor, feat: Tensor) -> Tensor:
        ph, pw = min(self.pool, feat.shape[1]), min(self.pool, feat.shape[2])
        tokens = _flatten(F.adaptive_max_pool2d(feat, ph, pw))
        keys = self.key(tokens) + self.pe[:ph * pw]
        attn = F.softmax(F.matmul(queries, F.transpose(keys)) * (1.0 / math.sqrt(self.dim)), axis=1)
        return F.matmul(attn, self.value(tokens))


class ReferenceGenerator(Module):
    """Learned queries, position-aware pooling over image and EA maps, reference offsets and confidence."""

    def __init__(self, dim: int, num_queries: int, image_channels: int, ea_channels: int,
                 rng: np.random.Generator, pool: int = 4):
        super().__init__()
        self.queries = Parameter(rng.normal(0.0, 1.0, (num_queries, dim)))
        self.anchors = make_anchor_grid(num_queries)
        self.w_q = Linear(dim, dim, rng)
        self.pool_image = PoolAttention(dim, image_channels, pool, rng)
        self.pool_ea = PoolAttention(dim, ea_channels, pool, rng)
        self.norm = LayerNorm(dim)
        self.offset = Linear(dim, 2, rng, zero_init=True)
        self.confidence = Linear(dim, 1, rng)

    def forward(self, f_image: Tensor, f_ea: Tensor, anchors: Optional[np.ndarray] = None) -> QueryState:
        anchors = self.anchors if anchors is None else np.asarray(anchors, dtype=np.float64)
        q0 = self.queries
        if anchors.shape != (q0.shape[0], 2):
            raise ContractError(f"{q0.shape[0]} queries need {q0.shape[0]} anchors, got array of shape {anchors.shape}")
        q_tilde = self.norm(self.w_q(q0) + self.pool_image(q0, f_image) + self.pool_ea(q0, f_ea))
        reference = F.clamp(self.offset(q_tilde) + anchors, 0.0, 1.0)
        confidence = F.sigmoid(F.reshape(self.confidence(q_tilde), (q0.shape[0],)))
        return QueryState(q_tilde, anchors, reference, confidence)


def gen_reference_points(generator: ReferenceGenerator, f_image: Tensor, f_ea: Tensor,
                         anchors: Optional[np.ndarray] = None) -> QueryState:
    """
    Reference points, confidences and refined embeddings for every learned query.

    Raises:
        ContractError: Anchor count differs from the query count.
    """
    return generator(f_image, f_ea, anchors)


def combine_samples(values: Tensor, weights: Tensor, uncertainty: Tensor) -> Tensor:
    """sum_m u_m w_m value_m per query: (Nq, M, d), (Nq, M), (Nq, M) -> Nq x d."""
    nq, m = weights.shape
    scale = F.reshape(weights * uncertainty, (nq, m, 1))
    return F.sum(values * scale, axis=1)


class DeformableUncertainAttention(Module):
    """
    Deformable sampling over a pyramid around each query's reference point.

    Per level s and sample k the query predicts an offset, an attention logit
    (softmax over all S*K samples) and an uncertainty u = sigmoid(.).

    Args:
        dim: Query dimension d.
        level_channels: Channel count of each pyramid level.
        samples: Samples K per level.
        rng: Initializer.
    """

    def __init__(self, dim: int, level_channels: Sequence[int], samples: int, rng: np.random.Generator):
        super().__init__()
        if not level_channels:
            raise ConfigurationError("deformable attention needs at least one pyramid level")
        if samples < 1:
            raise ConfigurationError(f"samples per level must be >= 1, got {samples}")
        self.levels, self.samples = len(level_channels), samples
        total = self.levels * samples
        self.offsets = Linear(dim, total * 2, rng, zero_init=True)
        self.weights = Linear(dim, total, rng)
        self.uncertainty = Linear(dim, total, rng)
        self.value_proj = ModuleList([Linear(c, dim, rng) for c in level_channels])

    def sample_values(self, queries: Tensor, reference: Tensor, pyramid: Sequence[Tensor]) -> Tensor:
        """Projected samples, Nq x (S*K) x d, level-major."""
        nq, k = queries.shape[0], self.samples
        offsets = F.reshape(self.offsets(queries), (nq, self.levels, k, 2))
        base = F.reshape(reference, (nq, 1, 2))
        values = []
        for s, feat in enumerate(pyramid):
            points = F.reshape(base + offsets[:, s], (nq * k, 2))
            sampled = self.value_proj[s](F.bilinear_sample(feat, points))
            values.append(F.reshape(sampled, (nq, k, sampled.shape[1])))
        return values[0] if len(values) == 1 else F.concat(values, axis=1)

    def forward(self, queries: Tensor, reference: Tensor, pyramid: Sequence[Tensor]) -> Tuple[Tensor, Tensor]:
        if len(pyramid) != self.levels:
            raise ConfigurationError(f"deformable attention built for {self.levels} levels, got {len(pyramid)}")
        values = self.sample_values(queries, reference, pyramid)
        weights = F.softmax(self.weights(queries), axis=1)
        uncertainty = F.sigmoid(self.uncertainty(queries))
        return combine_samples(values, weights, uncertainty), uncertainty


def deformable_uncertain_attention(attention: DeformableUncertainAttention, queries: Tensor,
                                   reference: Tensor, pyramid: List[Tensor]) -> Tuple[Tensor, Tensor]:
    """
    Uncertainty-weighted deformable sampling for a batch of queries.

    Returns:
        tuple: (Nq x d output, Nq x (S*K) uncertainties).

    Raises:
        ConfigurationError: Empty pyramid or level count mismatch.
    """
    if not pyramid:
        raise ConfigurationError("deformable attention needs a non-empty pyramid")
    return attention(queries, reference, pyramid)


class PathFusion(Module):
    """
    Learned projection of the concatenated GS and RA path outputs back to d.

    One fully-connected layer (2d -> d) with no hidden layer or activation; the
    head's refinement FFN supplies the nonlinearity downstream.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.proj = Linear(2 * dim, dim, rng)

    def forward(self, f_gs: Tensor, f_ra: Tensor) -> Tensor:
        f_gs, f_ra = as_tensor(f_gs), as_tensor(f_ra)
        if f_gs.shape != f_ra.shape or f_gs.shape[-1] != self.dim:
            raise DimensionError(f"path outputs must both end in d={self.dim}, got {f_gs.shape} and {f_ra.shape}")
        return self.proj(F.concat([f_gs, f_ra], axis=-1))


def fuse_paths(f_gs: Tensor, f_ra: Tensor, fusion: PathFusion) -> Tensor:
    return fusion(f_gs, f_ra)
