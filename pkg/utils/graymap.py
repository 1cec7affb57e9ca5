"""
Graymap Export
Binary PGM (P5) writer for feature-map grids.
"""

import math
import os

import numpy as np

from wrcfusion.errors import DimensionError, FormatError


def tile_channels(maps: np.ndarray, columns: int = 0, gap: int = 1) -> np.ndarray:
    """
    Arrange C x H x W channels into one grid image, row-major, with `gap` pixel separators.

    Args:
        maps: C x H x W array.
        columns: Grid columns (0 = ceil(sqrt(C))).
        gap: Separator width in pixels.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise DimensionError(f"expected C x H x W maps, got shape {maps.shape}")
    c, h, w = maps.shape
    columns = columns or max(1, math.ceil(math.sqrt(c)))
    rows = -(-c // columns)
    grid = np.zeros((rows * h + (rows - 1) * gap, columns * w + (columns - 1) * gap))
    for i in range(c):
        r, col = divmod(i, columns)
        grid[r * (h + gap):r * (h + gap) + h, col * (w + gap):col * (w + gap) + w] = maps[i]
    return grid


def to_gray(image: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear map of [lo, hi] onto 0..255; a constant image maps to 0."""
    span = hi - lo
    if span <= 0 or not np.isfinite(span):
        return np.zeros(image.shape, dtype=np.uint8)
    return np.clip(np.round((image - lo) / span * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray, lo: float = None, hi: float = None) -> str:
    """
    Write a 2-D array as an 8-bit binary PGM.

    Args:
        path: Output file.
        image: H x W values.
        lo, hi: Intensity window (defaults to the image range).

    Returns:
        str: The written path.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DimensionError(f"PGM images are 2-D, got shape {image.shape}")
    lo = float(image.min()) if lo is None else lo
    hi = float(image.max()) if hi is None else hi
    pixels = to_gray(image, lo, hi)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path


def read_pgm_header(path: str):
    """(width, height, maxval) of a binary PGM."""
    with open(path, "rb") as f:
        tokens = f.read(64).split(maxsplit=4)
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise FormatError(f"{path} is not a binary PGM")
    return int(tokens[1]), int(tokens[2]), int(tokens[3])
