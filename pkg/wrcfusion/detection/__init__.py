"""Boxes, matching, losses and AP evaluation."""

from wrcfusion.detection.boxes import (
    BOX_PARAMS,
    Box3D,
    BoxCoder,
    Detection,
    GroundTruthBox,
    decode_box,
    encode_box,
    fuse_score,
)

__all__ = [
    "BOX_PARAMS", "Box3D", "BoxCoder", "Detection", "GroundTruthBox", "decode_box", "encode_box", "fuse_score",
]
