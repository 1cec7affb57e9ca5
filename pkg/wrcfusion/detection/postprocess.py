"""
Detection Decoding
Turns final-iteration head outputs into scored, decoded detections.
"""

from typing import List, Optional

import numpy as np

from wrcfusion.detection.boxes import BoxCoder, Detection, fuse_score
from wrcfusion.errors import DimensionError


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def detections_from_output(logits: np.ndarray, boxes: np.ndarray, confidence: np.ndarray,
                           uncertainty: np.ndarray, coder: BoxCoder, scene_id: str = "",
                           min_score: Optional[float] = None) -> List[Detection]:
    """
    One detection per query, scored with the fused score.

    Args:
        logits: Nq x (C + 1) final-iteration logits, background last.
        boxes: Nq x 8 final-iteration box vectors.
        confidence: Nq reference confidences.
        uncertainty: Nq x M sampling uncertainties over both attention paths.
        coder: Box decoder for the scene's RA extent.
        scene_id: Tag stored on every detection.
        min_score: Drop detections scoring below this (None keeps all).

    Returns:
        list: Detections in query order.
    """
    logits = np.asarray(logits, dtype=np.float64)
    nq = logits.shape[0]
    uncertainty = np.asarray(uncertainty, dtype=np.float64).reshape(nq, -1)
    if boxes.shape[0] != nq or confidence.shape[0] != nq:
        raise DimensionError(f"{nq} logit rows but {boxes.shape[0]} boxes and {confidence.shape[0]} confidences")
    probs = softmax_rows(logits)
    detections = []
    for i in range(nq):
        raw = float(probs[i, :-1].max())
        conf = float(np.clip(confidence[i], 0.0, 1.0))
        score = fuse_score(min(raw, 1.0), conf, np.clip(uncertainty[i], 0.0, 1.0))
        if min_score is not None and score < min_score:
            continue
        detections.append(Detection(coder.decode(boxes[i]), probs[i], raw, conf,
                                    float(uncertainty[i].mean()), score, scene_id))
    return detections
