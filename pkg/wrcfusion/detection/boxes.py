"""
Box Types
3D boxes, ground truth, detections and the normalized box encoding.

The encoding is an 8-vector (u, v, z / z_scale, log w/w0, log l/l0, log h/h0,
sin yaw, cos yaw) where (u, v) are the box centre's normalized RA-plane
coordinates: u follows azimuth across the map width, v follows range down
its height.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from wrcfusion.errors import ConfigurationError, ContractError, DimensionError

BOX_PARAMS = 8


def wrap_angle(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Box3D:
    """
    Yaw-rotated 3D box in the ego frame (x forward, y left, z up).

    Attributes:
        x, y, z: Centre in metres.
        w: Width (lateral extent) in metres.
        l: Length (extent along the heading) in metres.
        h: Height in metres.
        yaw: Heading in radians, normalized into (-pi, pi].
    """

    x: float
    y: float
    z: float
    w: float
    l: float  # noqa: E741
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        values = (self.x, self.y, self.z, self.w, self.l, self.h, self.yaw)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"box has non-finite parameters: {values}")
        if min(self.w, self.l, self.h) < 0:
            raise ConfigurationError(f"box sizes must be non-negative, got w={self.w} l={self.l} h={self.h}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def center(self) -> Tuple[float, float, float]:
        return self.x, self.y, self.z

    def as_tuple(self) -> Tuple[float, ...]:
        return self.x, self.y, self.z, self.w, self.l, self.h, self.yaw

    def corners_bev(self) -> np.ndarray:
        """4 x 2 footprint corners, counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        half_l, half_w = self.l / 2.0, self.w / 2.0
        local = np.array([[half_l, half_w], [-half_l, half_w], [-half_l, -half_w], [half_l, -half_w]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def corners(self) -> np.ndarray:
        """8 x 3 corners: footprint at the bottom face, then at the top face."""
        bev = self.corners_bev()
        bottom = np.column_stack([bev, np.full(4, self.z - self.h / 2.0)])
        top = np.column_stack([bev, np.full(4, self.z + self.h / 2.0)])
        return np.vstack([bottom, top])


@dataclass(frozen=True)
class GroundTruthBox:
    """Annotated object: class, box and radial velocity (annotated, never regressed)."""

    class_id: int
    box: Box3D
    radial_velocity: float = 0.0


@dataclass
class Detection:
    """
    One decoded query.

    Attributes:
        box: Decoded box.
        class_probs: Softmax over classes plus background (last entry).
        raw_score: Best foreground probability.
        confidence: Reference-point confidence c.
        uncertainty: Mean sampling uncertainty over all deformable samples.
        score: Fused score raw_score * confidence * uncertainty.
        scene_id: Scene the detection belongs to.
    """

    box: Box3D
    class_probs: np.ndarray
    raw_score: float
    confidence: float
    uncertainty: float
    score: float
    scene_id: str = ""

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.class_probs[:-1]))


def fuse_score(raw_score: float, confidence: float, uncertainties: Sequence[float]) -> float:
    """
    Fused detection score s = raw_score * confidence * mean(uncertainties).

    Raises:
        ContractError: Empty uncertainty list or a factor outside [0, 1].
    """
    if len(uncertainties) == 0:
        raise ContractError("fuse_score needs at least one uncertainty weight")
    factors = [raw_score, confidence, *uncertainties]
    if any(not 0.0 <= f <= 1.0 for f in factors):
        raise ContractError("fuse_score inputs must lie in [0, 1]")
    return float(raw_score * confidence * float(np.mean(uncertainties)))


@dataclass(frozen=True)
class BoxCoder:
    """
    Converts between ego-frame boxes and the normalized 8-vector.

    The RA plane is polar: v in [0, 1] spans [range_min, range_max] and u in
    [0, 1] spans [-azimuth_half, azimuth_half].
    """

    range_min: float = 0.0
    range_max: float = 48.0
    azimuth_half: float = math.pi / 4
    z_scale: float = 2.0
    reference_size: Tuple[float, float, float] = (1.0, 2.0, 1.5)

    def __post_init__(self):
        if self.range_max <= self.range_min or self.azimuth_half <= 0 or self.z_scale <= 0:
            raise ConfigurationError("box coder needs a non-empty polar extent and positive z scale")
        if min(self.reference_size) <= 0:
            raise ConfigurationError(f"reference box size must be positive, got {self.reference_size}")

    def to_uv(self, x: float, y: float) -> Tuple[float, float]:
        rng = math.hypot(x, y)
        az = math.atan2(y, x)
        u = (az + self.azimuth_half) / (2.0 * self.azimuth_half)
        v = (rng - self.range_min) / (self.range_max - self.range_min)
        return u, v

    def to_xy(self, u: float, v: float) -> Tuple[float, float]:
        rng = self.range_min + v * (self.range_max - self.range_min)
        az = (u - 0.5) * 2.0 * self.azimuth_half
        return rng * math.cos(az), rng * math.sin(az)

    def encode(self, box: Box3D) -> np.ndarray:
        u, v = self.to_uv(box.x, box.y)
        w0, l0, h0 = self.reference_size
        return np.array([
            u, v, box.z / self.z_scale,
            math.log(max(box.w, 1e-6) / w0), math.log(max(box.l, 1e-6) / l0), math.log(max(box.h, 1e-6) / h0),
            math.sin(box.yaw), math.cos(box.yaw),
        ])

    def decode(self, params: Sequence[float]) -> Box3D:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (BOX_PARAMS,):
            raise DimensionError(f"box parameter vector must have {BOX_PARAMS} entries, got {params.shape}")
        u, v, zn, lw, ll, lh, s, c = params
        x, y = self.to_xy(u, v)
        w0, l0, h0 = self.reference_size
        # log-sizes capped before exp
        return Box3D(x, y, zn * self.z_scale, w0 * math.exp(min(lw, 20.0)), l0 * math.exp(min(ll, 20.0)),
                     h0 * math.exp(min(lh, 20.0)), math.atan2(s, c))

    def encode_all(self, boxes: Sequence[GroundTruthBox]) -> np.ndarray:
        if not boxes:
            return np.zeros((0, BOX_PARAMS))
        return np.stack([self.encode(b.box) for b in boxes])


def encode_box(box: Box3D, coder: Optional[BoxCoder] = None) -> np.ndarray:
    return (coder or BoxCoder()).encode(box)


def decode_box(params: Sequence[float], coder: Optional[BoxCoder] = None) -> Box3D:
    return (coder or BoxCoder()).decode(params)

