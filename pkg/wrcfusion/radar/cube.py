"""
Radar Cube Types
The 4D amplitude grid, its axes, and the 2D view maps projected from it.
"""

import enum
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError, DimensionError


class View(str, enum.Enum):
    RA = "RA"
    EA = "EA"


VIEW_CHANNELS = ("amp_max", "amp_median", "amp_var", "dop_max", "dop_median", "dop_var")

# Range bins dropped at each end before the EA projection.
EA_RANGE_TRIM = 3


@dataclass(frozen=True)
class RadarGeometry:
    """Physical extent of the cube; bin centres sit mid-way between bin edges."""

    dims: Tuple[int, int, int, int] = (32, 32, 8, 16)
    range_max_m: float = 48.0
    azimuth_fov_deg: float = 90.0
    elevation_fov_deg: float = 40.0
    doppler_resolution_mps: float = 1.0

    def __post_init__(self):
        if len(self.dims) != 4 or min(self.dims) < 4:
            raise ConfigurationError(f"cube dims must be four sizes >= 4, got {self.dims}")
        if self.range_max_m <= 0 or self.azimuth_fov_deg <= 0 or self.elevation_fov_deg <= 0:
            raise ConfigurationError("radar extents must be positive")

    @property
    def azimuth_half_rad(self) -> float:
        return math.radians(self.azimuth_fov_deg) / 2.0

    @property
    def elevation_half_rad(self) -> float:
        return math.radians(self.elevation_fov_deg) / 2.0

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Strictly increasing (range, azimuth, elevation, doppler) coordinates."""
        r, a, e, d = self.dims
        dr = self.range_max_m / r
        range_m = (np.arange(r) + 0.5) * dr
        da = 2 * self.azimuth_half_rad / a
        azimuth = -self.azimuth_half_rad + (np.arange(a) + 0.5) * da
        de = 2 * self.elevation_half_rad / e
        elevation = -self.elevation_half_rad + (np.arange(e) + 0.5) * de
        doppler = (np.arange(d) - d // 2) * self.doppler_resolution_mps
        return range_m, azimuth, elevation, doppler


@dataclass
class RadarCube:
    """
    Dense amplitude grid over (range, azimuth, elevation, doppler).

    Attributes:
        amp: R x A x E x D non-negative linear-power amplitudes.
        range_m: Range bin centres in metres.
        azimuth_rad: Azimuth bin centres in radians.
        elevation_rad: Elevation bin centres in radians.
        doppler_mps: Doppler bin centres in metres per second.
    """

    amp: np.ndarray
    range_m: np.ndarray
    azimuth_rad: np.ndarray
    elevation_rad: np.ndarray
    doppler_mps: np.ndarray

    def __post_init__(self):
        self.amp = np.asarray(self.amp, dtype=np.float64)
        axes = (self.range_m, self.azimuth_rad, self.elevation_rad, self.doppler_mps)
        names = ("range", "azimuth", "elevation", "doppler")
        if self.amp.ndim != 4:
            raise DimensionError(f"radar cube must be 4-D, got shape {self.amp.shape}")
        for axis, (coords, name) in enumerate(zip(axes, names)):
            coords = np.asarray(coords, dtype=np.float64)
            if coords.shape != (self.amp.shape[axis],):
                raise DimensionError(f"{name} axis has {coords.shape[0] if coords.ndim else 0} "
                                     f"coordinates for {self.amp.shape[axis]} bins")
            if coords.size > 1 and not np.all(np.diff(coords) > 0):
                raise ConfigurationError(f"{name} axis coordinates must be strictly increasing")
        if not np.all(np.isfinite(self.amp)) or np.any(self.amp < 0):
            raise ConfigurationError("cube amplitudes must be finite and non-negative")
        self.range_m, self.azimuth_rad, self.elevation_rad, self.doppler_mps = (
            np.asarray(c, dtype=np.float64) for c in axes)

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return tuple(self.amp.shape)

    @classmethod
    def zeros(cls, geometry: RadarGeometry) -> "RadarCube":
        return cls(np.zeros(geometry.dims), *geometry.axes())


def _edges(centres: np.ndarray) -> Tuple[float, float]:
    half = (centres[1] - centres[0]) / 2.0 if centres.size > 1 else 0.0
    return float(centres[0] - half), float(centres[-1] + half)


def cube_extent(cube: RadarCube) -> Tuple[float, float, float]:
    """
    Polar extent covered by the RA plane: (range_min, range_max, azimuth_half).

    Taken from the outer bin edges, so normalized map coordinate 0 and 1 fall
    on the first and last edge.
    """
    range_min, range_max = _edges(cube.range_m)
    az_lo, az_hi = _edges(cube.azimuth_rad)
    return max(0.0, range_min), range_max, max(abs(az_lo), abs(az_hi))


@dataclass
class ViewMap:
    """
    Six-channel projection of a cube onto the RA or EA plane.

    Attributes:
        view: Which plane the map lives in.
        channels: 6 x H x W tensor ordered as VIEW_CHANNELS.
        row_coords: Coordinates of the H axis (range for RA, elevation for EA).
        col_coords: Coordinates of the W axis (azimuth for both views).
        range_bins_used: Number of range bins that entered the projection.
    """

    view: View
    channels: Tensor
    row_coords: np.ndarray
    col_coords: np.ndarray
    range_bins_used: int

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[0] != len(VIEW_CHANNELS):
            raise DimensionError(f"view map must have {len(VIEW_CHANNELS)} channels, got {self.channels.shape}")

    def channel(self, name: str) -> np.ndarray:
        return self.channels.data[VIEW_CHANNELS.index(name)]
