"""
Checkpoint Files
Self-describing binary parameter store.

Layout (little-endian): magic b"WRCF", version u32, parameter count u32, then
per parameter: name length u32, UTF-8 name, rank u32, dims u64 each, f64
payload.
"""

import logging
import os
import struct
from collections import OrderedDict
from typing import Dict, Tuple

import numpy as np

from wrcfusion.core.nn import Module
from wrcfusion.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"WRCF"
VERSION = 1


class BinaryReader:
    """Cursor over a byte buffer that reports offsets on truncation."""

    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {self.what}: needed {n} bytes for {field}, "
                              f"{len(self.buf) - self.pos} left", offset=self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]

    def u64(self, field: str) -> int:
        return struct.unpack("<Q", self.take(8, field))[0]

    def f64_array(self, shape: Tuple[int, ...], field: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(8 * count, field)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic), "magic")
        if got != magic:
            raise FormatError(f"bad magic in {self.what}: expected {magic!r}, got {got!r}", offset=0)

    def expect_version(self, version: int) -> None:
        offset = self.pos
        got = self.u32("version")
        if got != version:
            raise FormatError(f"unsupported {self.what} version {got} (this build reads version {version})",
                              offset=offset)

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what}", offset=self.pos)


def encode_arrays(arrays: "OrderedDict[str, np.ndarray]") -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array, dtype=np.float64)
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.astype("<f8").tobytes())
    return b"".join(parts)


def decode_arrays(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    reader = BinaryReader(buf, "checkpoint")
    reader.expect_magic(MAGIC)
    reader.expect_version(VERSION)
    count = reader.u32("parameter count")
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for index in range(count):
        length = reader.u32(f"name length of parameter {index}")
        offset = reader.pos
        try:
            name = reader.take(length, f"name of parameter {index}").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"parameter {index} name is not UTF-8", offset=offset) from None
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u64(f"dim {axis} of {name}") for axis in range(rank))
        arrays[name] = reader.f64_array(shape, f"payload of {name}")
    reader.done()
    return arrays


def save_checkpoint(model: Module, path: str) -> None:
    """Write every parameter of `model` to `path`."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(encode_arrays(state))
    logger.info("Saved checkpoint with %d parameters to %s", len(state), path)


def read_checkpoint(path: str) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return decode_arrays(f.read())


def load_checkpoint(model: Module, path: str) -> None:
    """
    Load a checkpoint into `model`.

    Raises:
        FormatError: The file is not a valid checkpoint.
        CheckpointMismatchError: Names or shapes do not match the model.
    """
    state = read_checkpoint(path)
    model.load_state_dict(state)
    logger.info("Loaded checkpoint %s (%d parameters)", path, len(state))
