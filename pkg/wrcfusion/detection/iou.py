"""
Box Overlap
Rotated-rectangle IoU in the bird's-eye view and in 3D.
"""

from shapely.geometry import Polygon

from wrcfusion.detection.boxes import Box3D


def _footprint(box: Box3D) -> Polygon:
    return Polygon(box.corners_bev())


def bev_intersection(a: Box3D, b: Box3D) -> float:
    """Area shared by the two yaw-rotated footprints."""
    pa, pb = _footprint(a), _footprint(b)
    if pa.area <= 0.0 or pb.area <= 0.0:
        return 0.0
    return float(pa.intersection(pb).area)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """
    Bird's-eye-view IoU of two boxes.

    Returns:
        float: Value in [0, 1]; 0 when either footprint has zero area.
    """
    inter = bev_intersection(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.w * a.l + b.w * b.l - inter
    return min(1.0, inter / union) if union > 0.0 else 0.0


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: BEV intersection times vertical overlap over the union of volumes."""
    inter_bev = bev_intersection(a, b)
    if inter_bev <= 0.0:
        return 0.0
    top = min(a.z + a.h / 2.0, b.z + b.h / 2.0)
    bottom = max(a.z - a.h / 2.0, b.z - b.h / 2.0)
    overlap = max(0.0, top - bottom)
    inter = inter_bev * overlap
    union = a.w * a.l * a.h + b.w * b.l * b.h - inter
    return min(1.0, inter / union) if union > 0.0 else 0.0
