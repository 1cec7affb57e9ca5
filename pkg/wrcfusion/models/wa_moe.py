"""
Wavelet Attention Mixture-of-Experts
Haar-domain two-branch encoding, sparse per-location expert routing and an
inverse transform back onto a residual connection.

For an input x (C x H x W):
    bands   = dwt2(x)                          4C x h x w
    f1      = Conv1(bands)                     depthwise-separable, 4C -> 4C
    f2      = iwt2(Conv2(dwt2(bands)))         Conv2 works on 16C second-level bands
    fused   = f1 + f2
    moe     = sum_e gate_e * expert_e(fused)   top-k gate per location
    y       = x + iwt2(moe)
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import Conv2d, Module, ModuleList, Parameter
from wrcfusion.core.profiler import mac_scope
from wrcfusion.core.tensor import Tensor, as_tensor
from wrcfusion.errors import ConfigurationError, DimensionError
from wrcfusion.models.wavelet import Subbands, dwt2_stacked, iwt2

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WAMoEConfig:
    """
    Attributes:
        channels: Signal-domain channel count C.
        num_experts: Number of experts N_e.
        top_k: Experts kept per location.
        expert_hidden: Hidden width of each expert (0 = 4C).
        temperature: Gate logit temperature.
        branch2_groups: Groups of Conv2's pointwise stage.
        zero_init: Zero the final expert stage so the block starts as the identity.
    """

    channels: int = 32
    num_experts: int = 4
    top_k: int = 2
    expert_hidden: int = 0
    temperature: float = 1.0
    branch2_groups: int = 4
    zero_init: bool = False

    def __post_init__(self):
        if self.channels < 1 or self.num_experts < 1:
            raise ConfigurationError("WA-MoE needs channels >= 1 and num_experts >= 1")
        if not 1 <= self.top_k <= self.num_experts:
            raise ConfigurationError(f"top_k must be in 1..{self.num_experts}, got {self.top_k}")
        if self.temperature <= 0:
            raise ConfigurationError(f"gate temperature must be positive, got {self.temperature}")
        if self.branch2_groups < 1 or (16 * self.channels) % self.branch2_groups:
            raise ConfigurationError(f"16C = {16 * self.channels} channels not divisible by "
                                     f"branch2_groups={self.branch2_groups}")
        if self.expert_hidden < 0:
            raise ConfigurationError("expert_hidden must be >= 0")

    @property
    def band_channels(self) -> int:
        return 4 * self.channels

    @property
    def hidden(self) -> int:
        return self.expert_hidden or self.band_channels

    def with_channels(self, channels: int) -> "WAMoEConfig":
        return WAMoEConfig(channels, self.num_experts, self.top_k, self.expert_hidden,
                           self.temperature, self.branch2_groups, self.zero_init)


@dataclass
class GateOutput:
    """
    Attributes:
        weights: N_e x h x w routing weights; exactly top_k non-zero per location, summing to 1.
        active: top_k x h x w indices of the selected experts, best first.
    """

    weights: Tensor
    active: np.ndarray


class SeparableConv(Module):
    """Depthwise 3x3 followed by a (possibly grouped) pointwise 1x1."""

    def __init__(self, channels: int, out_channels: int, rng: np.random.Generator,
                 pointwise_groups: int = 1, zero_init: bool = False):
        super().__init__()
        self.depthwise = Conv2d(channels, channels, 3, rng, padding=1, groups=channels, zero_init=zero_init)
        self.pointwise = Conv2d(channels, out_channels, 1, rng, groups=pointwise_groups, zero_init=zero_init)

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


class Expert(Module):
    """Depthwise 3x3, pointwise expansion with ReLU, pointwise projection back."""

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator, zero_init: bool = False):
        super().__init__()
        self.depthwise = Conv2d(channels, channels, 3, rng, padding=1, groups=channels)
        self.expand = Conv2d(channels, hidden, 1, rng)
        self.project = Conv2d(hidden, channels, 1, rng, zero_init=zero_init)

    def forward(self, x: Tensor) -> Tensor:
        return self.project(F.relu(self.expand(self.depthwise(x))))


def moe_gate(f: Tensor, gate: Conv2d, cfg: WAMoEConfig) -> GateOutput:
    """
    Sparse per-location gate.

    The top_k logits at each location are softmax-renormalized and every other
    expert gets exactly zero weight (and therefore zero gradient).

    Args:
        f: 4C x h x w fused band features.
        gate: 1x1 convolution producing N_e logits.
        cfg: Block configuration.

    Returns:
        GateOutput: Weights and selected expert indices.
    """
    logits = gate(f)
    if cfg.temperature != 1.0:
        logits = logits * (1.0 / cfg.temperature)
    order = np.argsort(-logits.data, axis=0, kind="stable")
    active = order[:cfg.top_k]
    if cfg.top_k == cfg.num_experts:
        return GateOutput(F.softmax(logits, axis=0), active)
    mask = np.zeros(logits.shape, dtype=bool)
    np.put_along_axis(mask, active, True, axis=0)
    penalty = np.where(mask, 0.0, -np.inf)
    return GateOutput(F.softmax(logits + penalty, axis=0), active)


def expert_forward(block: "WAMoEBlock", f: Tensor, expert_index: int) -> Tensor:
    """
    Run one expert of `block` on `f`.

    Raises:
        ConfigurationError: expert_index outside 0..N_e-1.
    """
    if not 0 <= expert_index < len(block.experts):
        raise ConfigurationError(f"expert index {expert_index} outside 0..{len(block.experts) - 1}")
    return block.experts[expert_index](f)


class WAMoEBlock(Module):
    """Shape-preserving WA-MoE block over C x H x W maps (H, W >= 4)."""

    def __init__(self, cfg: WAMoEConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        c4 = cfg.band_channels
        self.conv1 = SeparableConv(c4, c4, rng)
        self.conv2 = SeparableConv(4 * c4, 4 * c4, rng, pointwise_groups=cfg.branch2_groups)
        self.gate = Conv2d(c4, cfg.num_experts, 1, rng)
        self.experts = ModuleList([Expert(c4, cfg.hidden, rng, zero_init=cfg.zero_init)
                                   for _ in range(cfg.num_experts)])
        self.last_gate: Optional[GateOutput] = None

    def fused_features(self, x: Tensor) -> Tuple[Tensor, Tuple[int, int]]:
        """F_fused = Conv1(bands) + iwt2(Conv2(dwt2(bands)))."""
        c, h, w = x.shape
        bands = dwt2_stacked(x)
        bh, bw = bands.shape[2], bands.shape[3]
        first = F.reshape(bands, (4 * c, bh, bw))
        f1 = self.conv1(first)
        second = dwt2_stacked(first)
        second = F.reshape(second, (16 * c, second.shape[2], second.shape[3]))
        f2 = iwt2(Subbands.from_channels(self.conv2(second), (bh, bw)))
        return f1 + f2, (h, w)

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[0] != self.cfg.channels:
            raise DimensionError(f"WA-MoE block expects {self.cfg.channels} x H x W, got {x.shape}")
        if x.shape[1] < 4 or x.shape[2] < 4:
            raise DimensionError(f"WA-MoE needs H, W >= 4 for two wavelet levels, got {x.shape[1:]}")
        with mac_scope("wa_moe"):
            fused, size = self.fused_features(x)
            gate = moe_gate(fused, self.gate, self.cfg)
            self.last_gate = gate
            mixed: Optional[Tensor] = None
            for index, expert in enumerate(self.experts):
                if not np.any(gate.active == index):
                    continue
                term = F.reshape(gate.weights[index], (1,) + fused.shape[1:]) * expert(fused)
                mixed = term if mixed is None else mixed + term
            residual = iwt2(Subbands.from_channels(mixed, size))
            return x + residual


def wa_moe_forward(x: Tensor, block: WAMoEBlock) -> Tensor:
    return block(x)


def expert_parameters(model: Module) -> List[Parameter]:
    """Parameters of every expert under `model`; they get no gradient on steps that never route to them."""
    return [p for module in model.modules() if isinstance(module, Expert) for p in module.parameters()]


def wa_moe_param_count(cfg: WAMoEConfig) -> int:
    """Closed-form parameter count of a WAMoEBlock built from `cfg`."""
    c4, c16, n, hid = cfg.band_channels, 16 * cfg.channels, cfg.num_experts, cfg.hidden

    def separable(ch: int, out: int, groups: int) -> int:
        return (ch * 9 + ch) + (out * (ch // groups) + out)

    conv1 = separable(c4, c4, 1)
    conv2 = separable(c16, c16, cfg.branch2_groups)
    gate = c4 * n + n
    expert = (c4 * 9 + c4) + (c4 * hid + hid) + (hid * c4 + c4)
    return conv1 + conv2 + gate + n * expert
