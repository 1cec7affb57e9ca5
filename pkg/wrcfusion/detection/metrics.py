"""
Detection Metrics
Greedy score-ordered matching, 40-point interpolated average precision and
the per-class / per-weather evaluation report.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from wrcfusion.detection.boxes import Box3D, Detection, GroundTruthBox
from wrcfusion.detection.iou import iou_3d, iou_bev
from wrcfusion.errors import FormatError

logger = logging.getLogger(__name__)

RECALL_POINTS = np.arange(1, 41) / 40.0
IoUFn = Callable[[Box3D, Box3D], float]


@dataclass
class APResult:
    """AP value, plus `no_ground_truth` when the class had nothing to find."""

    ap: float
    num_gt: int
    num_det: int
    no_ground_truth: bool = False


def precision_recall(detections: Sequence[Detection], ground_truths: Mapping[str, Sequence[Box3D]],
                     iou_fn: IoUFn, threshold: float):
    """Precision and recall after each detection in descending score order."""
    num_gt = sum(len(v) for v in ground_truths.values())
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    taken = {scene: np.zeros(len(boxes), dtype=bool) for scene, boxes in ground_truths.items()}
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        det = detections[i]
        boxes = ground_truths.get(det.scene_id, ())
        best, best_iou = -1, threshold
        for j, gt in enumerate(boxes):
            if taken[det.scene_id][j]:
                continue
            overlap = iou_fn(det.box, gt)
            if overlap >= best_iou:
                best, best_iou = j, overlap
        if best >= 0:
            taken[det.scene_id][best] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(order) + 1)
    recall = cum_tp / max(1, num_gt)
    return precision, recall


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Mean over 40 recall points of the best precision reached at or beyond each point."""
    if precision.size == 0:
        return 0.0
    # running max from the tail
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    values = []
    for r in RECALL_POINTS:
        idx = np.searchsorted(recall, r - 1e-12, side="left")
        values.append(envelope[idx] if idx < envelope.size else 0.0)
    return float(np.mean(values))


def average_precision(detections: Sequence[Detection], ground_truths: Mapping[str, Sequence[Box3D]],
                      iou_fn: IoUFn = iou_bev, threshold: float = 0.3) -> APResult:
    """
    40-point interpolated AP of scored detections against per-scene ground truth.

    Detections are matched greedily in descending score order; each ground
    truth can be claimed once, by the first detection reaching `threshold`.

    Args:
        detections: Detections with fused scores and scene ids.
        ground_truths: Boxes keyed by scene id.
        iou_fn: Overlap measure (iou_bev or iou_3d).
        threshold: Minimum IoU for a true positive.

    Returns:
        APResult: AP is 0 with `no_ground_truth` set when there is nothing to detect.
    """
    num_gt = sum(len(v) for v in ground_truths.values())
    if num_gt == 0:
        if detections:
            logger.debug("AP requested with %d detections and no ground truth", len(detections))
        return APResult(0.0, 0, len(detections), no_ground_truth=True)
    precision, recall = precision_recall(detections, ground_truths, iou_fn, threshold)
    return APResult(interpolated_ap(precision, recall), num_gt, len(detections))


@dataclass
class EvaluationReport:
    """
    Attributes:
        per_class: {class name: {"ap_bev": .., "ap_3d": .., "num_gt": ..}}.
        mean_ap_bev: Mean AP_BEV over classes with ground truth.
        mean_ap_3d: Mean AP_3D over classes with ground truth.
        per_weather: Mean AP_BEV restricted to scenes of each weather.
    """

    threshold: float
    per_class: Dict[str, Dict[str, float]] = field(default_factory=dict)
    mean_ap_bev: float = 0.0
    mean_ap_3d: float = 0.0
    per_weather: Dict[str, float] = field(default_factory=dict)
    num_scenes: int = 0
    num_detections: int = 0

    def as_dict(self) -> Dict:
        return {
            "threshold": self.threshold,
            "per_class": self.per_class,
            "mean_ap_bev": self.mean_ap_bev,
            "mean_ap_3d": self.mean_ap_3d,
            "per_weather": self.per_weather,
            "num_scenes": self.num_scenes,
            "num_detections": self.num_detections,
        }


def _class_boxes(gts: Mapping[str, Sequence[GroundTruthBox]], class_id: int) -> Dict[str, List[Box3D]]:
    return {scene: [g.box for g in boxes if g.class_id == class_id] for scene, boxes in gts.items()}


def _mean_ap(detections: Sequence[Detection], gts: Mapping[str, Sequence[GroundTruthBox]],
             class_ids: Sequence[int], iou_fn: IoUFn, threshold: float) -> float:
    values = []
    for c in class_ids:
        result = average_precision([d for d in detections if d.class_id == c], _class_boxes(gts, c),
                                   iou_fn, threshold)
        if not result.no_ground_truth:
            values.append(result.ap)
    return float(np.mean(values)) if values else 0.0


def evaluate_detections(detections: Sequence[Detection], ground_truths: Mapping[str, Sequence[GroundTruthBox]],
                        class_names: Sequence[str], threshold: float = 0.3,
                        weather: Optional[Mapping[str, str]] = None) -> EvaluationReport:
    """
    AP_BEV and AP_3D per class and averaged, plus per-weather mean AP_BEV.

    Detections are assigned to the class with the highest foreground
    probability. Classes without ground truth are reported but left out of
    the means.
    """
    report = EvaluationReport(threshold, num_scenes=len(ground_truths), num_detections=len(detections))
    bev_values, td_values = [], []
    for c, name in enumerate(class_names):
        dets = [d for d in detections if d.class_id == c]
        boxes = _class_boxes(ground_truths, c)
        bev = average_precision(dets, boxes, iou_bev, threshold)
        td = average_precision(dets, boxes, iou_3d, threshold)
        report.per_class[name] = {"ap_bev": bev.ap, "ap_3d": td.ap, "num_gt": bev.num_gt}
        if not bev.no_ground_truth:
            bev_values.append(bev.ap)
            td_values.append(td.ap)
    report.mean_ap_bev = float(np.mean(bev_values)) if bev_values else 0.0
    report.mean_ap_3d = float(np.mean(td_values)) if td_values else 0.0
    if weather:
        for condition in sorted(set(weather.values())):
            scenes = {s for s, w in weather.items() if w == condition}
            subset = {s: g for s, g in ground_truths.items() if s in scenes}
            dets = [d for d in detections if d.scene_id in scenes]
            report.per_weather[condition] = _mean_ap(dets, subset, range(len(class_names)), iou_bev, threshold)
    return report


@dataclass
class DumpRecord:
    scene_id: str
    class_id: int
    score: float
    box: Box3D


def format_detection(det: Detection) -> str:
    values = " ".join(repr(float(v)) for v in det.box.as_tuple())
    return f"{det.scene_id} {det.class_id} {float(det.score)!r} {values}"


def write_detections(path: str, detections: Sequence[Detection]) -> int:
    """Write one `scene_id class score x y z w l h yaw` line per detection; returns the line count."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for det in detections:
            f.write(format_detection(det) + "\n")
    return len(detections)


def read_detections(path: str) -> List[DumpRecord]:
    """
    Parse a detection dump.

    Raises:
        FormatError: A line does not have ten fields or a field fails to parse.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 10:
                raise FormatError(f"{path}:{number}: expected 10 fields, got {len(parts)}")
            try:
                values = [float(p) for p in parts[3:]]
                records.append(DumpRecord(parts[0], int(parts[1]), float(parts[2]), Box3D(*values)))
            except ValueError as e:
                raise FormatError(f"{path}:{number}: {e}") from None
    return records
