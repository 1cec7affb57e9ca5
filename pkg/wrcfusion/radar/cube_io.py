"""
Scene File Formats
Binary cube and image files and the whitespace-separated box list.

Cube layout (little-endian): magic b"WRCC", version u32, R A E D as u32, the
four axis coordinate arrays as f64, then the R*A*E*D amplitude payload as f64
in row-major order. Image layout: magic b"WRCI", version u32, C H W as u32,
f64 payload.
"""

import struct
from typing import List

import numpy as np

from wrcfusion.core.checkpoint import BinaryReader
from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import Box3D, GroundTruthBox
from wrcfusion.errors import FormatError
from wrcfusion.radar.cube import RadarCube

CUBE_MAGIC = b"WRCC"
IMAGE_MAGIC = b"WRCI"
FORMAT_VERSION = 1


def encode_cube(cube: RadarCube) -> bytes:
    parts = [CUBE_MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<4I", *cube.dims)]
    for axis in (cube.range_m, cube.azimuth_rad, cube.elevation_rad, cube.doppler_mps):
        parts.append(np.asarray(axis, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(cube.amp, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_cube(buf: bytes) -> RadarCube:
    reader = BinaryReader(buf, "cube file")
    reader.expect_magic(CUBE_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    dims = tuple(reader.u32(f"dimension {axis}") for axis in range(4))
    axes = [reader.f64_array((n,), f"{name} axis")
            for n, name in zip(dims, ("range", "azimuth", "elevation", "doppler"))]
    amp = reader.f64_array(dims, "amplitude payload")
    reader.done()
    return RadarCube(amp, *axes)


def write_cube(cube: RadarCube, path: str) -> None:
    with open(path, "wb") as f:
        f.write(encode_cube(cube))


def read_cube(path: str) -> RadarCube:
    """
    Read a cube file.

    Raises:
        FormatError: Bad magic, unsupported version or truncation, with the byte offset.
    """
    with open(path, "rb") as f:
        return decode_cube(f.read())


def write_image(image: Tensor, path: str) -> None:
    data = np.ascontiguousarray(image.data, dtype="<f8")
    with open(path, "wb") as f:
        f.write(IMAGE_MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<3I", *data.shape) + data.tobytes())


def read_image(path: str) -> Tensor:
    with open(path, "rb") as f:
        reader = BinaryReader(f.read(), "image file")
    reader.expect_magic(IMAGE_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    shape = tuple(reader.u32(f"dimension {axis}") for axis in range(3))
    data = reader.f64_array(shape, "pixel payload")
    reader.done()
    return Tensor(data)


def format_boxes(boxes: List[GroundTruthBox]) -> str:
    lines = []
    for gt in boxes:
        values = [*gt.box.as_tuple(), gt.radial_velocity]
        lines.append(" ".join([str(gt.class_id)] + [repr(float(v)) for v in values]))
    return "".join(line + "\n" for line in lines)


def parse_boxes(text: str, source: str = "boxes") -> List[GroundTruthBox]:
    """Parse `class x y z w l h yaw vr` lines; blank lines are skipped."""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 9:
            raise FormatError(f"{source} line {lineno}: expected 9 fields, got {len(fields)}")
        try:
            class_id = int(fields[0])
            x, y, z, w, l, h, yaw, vr = (float(v) for v in fields[1:])
        except ValueError:
            raise FormatError(f"{source} line {lineno}: non-numeric field in {line!r}") from None
        try:
            boxes.append(GroundTruthBox(class_id, Box3D(x, y, z, w, l, h, yaw), vr))
        except ValueError as e:
            raise FormatError(f"{source} line {lineno}: {e}") from None
    return boxes


def write_boxes(boxes: List[GroundTruthBox], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_boxes(boxes))


def read_boxes(path: str) -> List[GroundTruthBox]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_boxes(f.read(), source=path)
