"""
Stream Encoders
Small strided CNN backbones for the image, RA and EA streams.
"""

from typing import List, Sequence

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import Conv2d, Module, ModuleList
from wrcfusion.core.profiler import mac_scope
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError, DimensionError


class ConvEncoder(Module):
    """
    One 3x3 conv + ReLU per stage; each stage has its own stride.

    Args:
        in_channels: Input channels (3 for images, 6 for view maps).
        widths: Output channels per stage.
        strides: Stride per stage (applied to both spatial axes).
        rng: Initializer.
        name: MAC scope label.
    """

    def __init__(self, in_channels: int, widths: Sequence[int], strides: Sequence[int],
                 rng: np.random.Generator, name: str = "encoder"):
        super().__init__()
        if len(widths) != len(strides) or not widths:
            raise ConfigurationError(f"encoder needs one stride per stage, got widths {tuple(widths)} "
                                     f"and strides {tuple(strides)}")
        if min(strides) < 1:
            raise ConfigurationError(f"encoder strides must be >= 1, got {tuple(strides)}")
        self.in_channels = in_channels
        self.name = name
        self.stages = ModuleList()
        prev = in_channels
        for width, stride in zip(widths, strides):
            self.stages.append(Conv2d(prev, width, 3, rng, stride=stride, padding=1))
            prev = width

    def forward(self, x: Tensor) -> List[Tensor]:
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise DimensionError(f"{self.name} expects {self.in_channels} x H x W input, got {x.shape}")
        levels = []
        with mac_scope(self.name):
            for stage in self.stages:
                x = F.relu(stage(x))
                levels.append(x)
        return levels
