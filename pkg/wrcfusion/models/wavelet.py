"""
Haar Wavelets
Orthonormal single-level 2D Haar analysis and synthesis.

On each 2x2 block [[a, b], [c, d]]:
    ll = (a + b + c + d) / 2    lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2    hh = (a - b - c + d) / 2
The transform is its own transpose, so synthesis applies the same butterfly.
Odd heights and widths are padded by repeating the last row or column.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.tensor import Function, Tensor, as_tensor
from wrcfusion.errors import DimensionError


def _butterfly(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, ...]:
    return ((a + b + c + d) / 2.0, (a + b - c - d) / 2.0,
            (a - b + c - d) / 2.0, (a - b - c + d) / 2.0)


def _split_blocks(x: np.ndarray) -> Tuple[np.ndarray, ...]:
    return x[..., 0::2, 0::2], x[..., 0::2, 1::2], x[..., 1::2, 0::2], x[..., 1::2, 1::2]


def _merge_blocks(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    lead, h, w = a.shape[:-2], a.shape[-2], a.shape[-1]
    out = np.empty(lead + (2 * h, 2 * w))
    out[..., 0::2, 0::2], out[..., 0::2, 1::2] = a, b
    out[..., 1::2, 0::2], out[..., 1::2, 1::2] = c, d
    return out


class HaarAnalysis(Function):
    """C x 2h x 2w -> 4 x C x h x w (bands ll, lh, hl, hh)."""

    def forward(self, x):
        return np.stack(_butterfly(*_split_blocks(x)))

    def backward(self, grad):
        return (_merge_blocks(*_butterfly(*grad)),)


class HaarSynthesis(Function):
    """4 x C x h x w -> C x 2h x 2w."""

    def forward(self, bands):
        return _merge_blocks(*_butterfly(*bands))

    def backward(self, grad):
        return (np.stack(_butterfly(*_split_blocks(grad))),)


@dataclass
class Subbands:
    """
    One level of Haar bands.

    Attributes:
        ll, lh, hl, hh: C x ceil(H/2) x ceil(W/2) bands.
        original_size: (H, W) before padding, used to crop on synthesis.
    """

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    original_size: Tuple[int, int]

    def __post_init__(self):
        shapes = {band.shape for band in self.bands}
        if len(shapes) != 1:
            raise DimensionError(f"subbands must share one shape, got {sorted(shapes)}")
        shape = shapes.pop()
        if len(shape) != 3:
            raise DimensionError(f"subbands must be C x h x w, got {shape}")
        h, w = self.original_size
        if shape[1] != -(-h // 2) or shape[2] != -(-w // 2):
            raise DimensionError(f"band size {shape[1:]} does not match original size {self.original_size}")

    @property
    def bands(self) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.ll, self.lh, self.hl, self.hh

    @property
    def channels(self) -> int:
        return self.ll.shape[0]

    def concat(self) -> Tensor:
        """Bands stacked along channels: 4C x h x w in (ll, lh, hl, hh) order."""
        return F.concat(list(self.bands), axis=0)

    @classmethod
    def from_channels(cls, x: Tensor, original_size: Tuple[int, int]) -> "Subbands":
        """Inverse of `concat`: split a 4C x h x w tensor into four C-channel bands."""
        if x.shape[0] % 4:
            raise DimensionError(f"band-stacked tensor needs a multiple of 4 channels, got {x.shape[0]}")
        c = x.shape[0] // 4
        return cls(*(x[i * c:(i + 1) * c] for i in range(4)), original_size=tuple(original_size))


def _pad_even(x: Tensor) -> Tensor:
    if x.shape[1] % 2:
        x = F.concat([x, x[:, -1:, :]], axis=1)
    if x.shape[2] % 2:
        x = F.concat([x, x[:, :, -1:]], axis=2)
    return x


def dwt2_stacked(x: Tensor) -> Tensor:
    """Haar analysis returning the bands as one 4 x C x h x w tensor."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"dwt2 expects C x H x W, got {x.shape}")
    if x.shape[1] < 2 or x.shape[2] < 2:
        raise DimensionError(f"dwt2 needs H, W >= 2, got {x.shape[1:]}")
    return HaarAnalysis.apply(_pad_even(x))


def dwt2(x: Tensor) -> Subbands:
    """
    Single-level orthonormal Haar analysis of a C x H x W map.

    Raises:
        DimensionError: H or W below 2.
    """
    x = as_tensor(x)
    stacked = dwt2_stacked(x)
    return Subbands(*(stacked[i] for i in range(4)), original_size=(x.shape[1], x.shape[2]))


def iwt2(s: Subbands) -> Tensor:
    """Exact inverse of `dwt2`, cropped to the stored original size."""
    bands = F.stack(list(s.bands), axis=0)
    out = HaarSynthesis.apply(bands)
    h, w = s.original_size
    if out.shape[1:] != (h, w):
        out = out[:, :h, :w]
    return out
