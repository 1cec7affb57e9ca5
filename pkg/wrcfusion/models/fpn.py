"""
Feature Pyramid
Lateral 1x1 projections, a nearest-neighbour top-down pathway and one WA-MoE
block per merged level, with an optional lateral skip onto each block output.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import Conv2d, Module, ModuleList
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError
from wrcfusion.models.wa_moe import WAMoEBlock, WAMoEConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FPNConfig:
    """
    Attributes:
        in_widths: Backbone channel count per level, fine to coarse.
        widths: Output channel count per level, fine to coarse.
        use_wa_moe: Pass each merged level through a WA-MoE block (False = identity).
        skip: Add the lateral projection onto each block output.
        detection_levels: Indices of the levels handed to the fusion stages.
    """

    in_widths: Tuple[int, ...] = (32, 64)
    widths: Tuple[int, ...] = (32, 64)
    use_wa_moe: bool = True
    skip: bool = True
    detection_levels: Tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if len(self.widths) < 1 or len(self.in_widths) != len(self.widths):
            raise ConfigurationError(f"FPN needs one input width per level, got {self.in_widths} for {self.widths}")
        if min(self.widths) < 1 or min(self.in_widths) < 1:
            raise ConfigurationError("FPN widths must be positive")
        if any(not 0 <= i < len(self.widths) for i in self.detection_levels):
            raise ConfigurationError(f"detection levels {self.detection_levels} outside 0..{len(self.widths) - 1}")

    @property
    def levels(self) -> int:
        return len(self.widths)


@dataclass
class PyramidOutput:
    """Merged maps, block outputs (before the lateral skip) and final maps, fine to coarse."""

    merged: List[Tensor]
    blocks: List[Tensor]
    outputs: List[Tensor]


class FPN(Module):
    def __init__(self, cfg: FPNConfig, moe: WAMoEConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.laterals = ModuleList([Conv2d(cin, cout, 1, rng) for cin, cout in zip(cfg.in_widths, cfg.widths)])
        # 1x1 adapters on the top-down path where adjacent widths differ
        self.adapters = ModuleList()
        self._adapter_index = {}
        for s in range(cfg.levels - 1):
            if cfg.widths[s + 1] != cfg.widths[s]:
                self._adapter_index[s] = len(self.adapters)
                self.adapters.append(Conv2d(cfg.widths[s + 1], cfg.widths[s], 1, rng))
        self.blocks: Optional[ModuleList] = None
        if cfg.use_wa_moe:
            self.blocks = ModuleList([WAMoEBlock(moe.with_channels(width), rng) for width in cfg.widths])

    def _check_levels(self, levels: Sequence[Tensor]) -> None:
        if len(levels) != self.cfg.levels:
            raise ConfigurationError(f"FPN expects {self.cfg.levels} backbone levels, got {len(levels)}")
        for s in range(len(levels) - 1):
            fine, coarse = levels[s].shape[1:], levels[s + 1].shape[1:]
            if coarse != (-(-fine[0] // 2), -(-fine[1] // 2)):
                raise ConfigurationError(f"backbone level {s + 1} size {coarse} is not half of level {s} size {fine}")

    def block(self, level: int, x: Tensor) -> Tensor:
        return x if self.blocks is None else self.blocks[level](x)

    def pyramid(self, levels: Sequence[Tensor]) -> PyramidOutput:
        self._check_levels(levels)
        lateral = [conv(x) for conv, x in zip(self.laterals, levels)]
        merged: List[Optional[Tensor]] = [None] * len(lateral)
        merged[-1] = lateral[-1]
        for s in range(len(lateral) - 2, -1, -1):
            top = F.upsample_nearest(merged[s + 1], lateral[s].shape[1:])
            if s in self._adapter_index:
                top = self.adapters[self._adapter_index[s]](top)
            merged[s] = lateral[s] + top
        blocks = [self.block(s, m) for s, m in enumerate(merged)]
        outputs = [out + lateral[s] if self.cfg.skip else out for s, out in enumerate(blocks)]
        return PyramidOutput(merged, blocks, outputs)

    def forward(self, levels: Sequence[Tensor]) -> List[Tensor]:
        return self.pyramid(levels).outputs


def fpn_forward(backbone_levels: Sequence[Tensor], fpn: FPN) -> List[Tensor]:
    """
    Run the pyramid over backbone levels ordered fine to coarse.

    Raises:
        ConfigurationError: Level count differs from the config or sizes do not halve.
    """
    return fpn(backbone_levels)
