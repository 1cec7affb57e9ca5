"""
Cube Projection
Collapse a radar cube onto the range-azimuth or elevation-azimuth plane.

Every cell of a view map summarizes one slab of the cube with six statistics:
the max, median and variance of the amplitudes, and the amplitude-weighted
max, median and variance of the Doppler coordinate.
"""

import logging
from typing import Tuple, Union

import numpy as np

from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ConfigurationError
from wrcfusion.radar.cube import EA_RANGE_TRIM, RadarCube, View, ViewMap

logger = logging.getLogger(__name__)


def slab_statistics(amp: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """
    Six statistics per cell of an (H, W, S) stack of slabs.

    Args:
        amp: Non-negative amplitudes, last axis enumerating the slab samples.
        coords: Doppler coordinate of each slab sample (length S).

    Returns:
        np.ndarray: 6 x H x W statistics ordered as VIEW_CHANNELS.
    """
    amp_max = amp.max(axis=-1)
    amp_median = np.median(amp, axis=-1)
    amp_var = amp.var(axis=-1)

    order = np.argsort(coords, kind="stable")
    sorted_coords = coords[order]
    cum = np.cumsum(amp[..., order], axis=-1)
    mass = cum[..., -1]
    has_mass = mass > 0
    safe_mass = np.where(has_mass, mass, 1.0)

    dop_max = coords[np.argmax(amp, axis=-1)]
    dop_median = sorted_coords[np.argmax(cum >= 0.5 * mass[..., None], axis=-1)]
    mean = (amp * coords).sum(axis=-1) / safe_mass
    dop_var = (amp * (coords - mean[..., None]) ** 2).sum(axis=-1) / safe_mass

    dop = [np.where(has_mass, stat, 0.0) for stat in (dop_max, dop_median, dop_var)]
    return np.stack([amp_max, amp_median, amp_var, *dop])


def normalize_channels(stats: np.ndarray) -> np.ndarray:
    """Z-score each channel over its map; a constant channel is only centred."""
    mean = stats.mean(axis=(1, 2), keepdims=True)
    std = stats.std(axis=(1, 2), keepdims=True)
    return (stats - mean) / np.where(std > 0, std, 1.0)


def _ra_slabs(cube: RadarCube) -> Tuple[np.ndarray, np.ndarray]:
    r, a, e, d = cube.dims
    coords = np.broadcast_to(cube.doppler_mps[None, :], (e, d)).reshape(-1)
    return cube.amp.reshape(r, a, e * d), coords


def _ea_slabs(cube: RadarCube) -> Tuple[np.ndarray, np.ndarray]:
    r, a, e, d = cube.dims
    kept = cube.amp[EA_RANGE_TRIM:r - EA_RANGE_TRIM]
    used = kept.shape[0]
    slabs = kept.transpose(2, 1, 0, 3).reshape(e, a, used * d)
    coords = np.broadcast_to(cube.doppler_mps[None, :], (used, d)).reshape(-1)
    return slabs, coords


def project(cube: RadarCube, view: Union[View, str], normalize: bool = True) -> ViewMap:
    """
    Project a cube onto one view plane.

    RA cells collapse the (elevation, Doppler) slab; EA cells collapse the
    (range, Doppler) slab after dropping EA_RANGE_TRIM range bins at each end.

    Args:
        cube: Cube to project.
        view: RA or EA.
        normalize: Z-score each channel over the map.

    Returns:
        ViewMap: 6-channel map (R x A for RA, E x A for EA).

    Raises:
        ConfigurationError: EA requested for a cube with R <= 2 * EA_RANGE_TRIM.
    """
    view = View(view)
    r = cube.dims[0]
    if view is View.RA:
        slabs, coords = _ra_slabs(cube)
        rows, used = cube.range_m, r
    else:
        if r <= 2 * EA_RANGE_TRIM:
            raise ConfigurationError(f"EA projection needs more than {2 * EA_RANGE_TRIM} range bins, got {r}")
        slabs, coords = _ea_slabs(cube)
        rows, used = cube.elevation_rad, r - 2 * EA_RANGE_TRIM
    stats = slab_statistics(slabs, coords)
    if normalize:
        stats = normalize_channels(stats)
    return ViewMap(view, Tensor(stats), rows.copy(), cube.azimuth_rad.copy(), used)
