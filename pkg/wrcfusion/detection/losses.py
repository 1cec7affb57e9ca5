"""
Set Prediction Loss
Focal classification and L1 box regression over Hungarian-matched queries,
applied to every refinement iteration.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.tensor import Tensor, as_tensor, no_grad
from wrcfusion.detection.boxes import BOX_PARAMS
from wrcfusion.detection.matching import Assignment, hungarian_match, matching_cost
from wrcfusion.errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    """
    Attributes:
        cls: Weight of the focal classification term.
        box: Weight of the L1 box term.
        focal_gamma: Focusing exponent.
        focal_alpha: Weight of foreground targets; background targets get 1 - alpha.
    """

    cls: float = 2.0
    box: float = 5.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        if self.cls < 0 or self.box < 0:
            raise ConfigurationError(f"loss weights must be non-negative, got cls={self.cls} box={self.box}")
        if self.cls == 0 and self.box == 0:
            raise ConfigurationError("loss weights cls and box cannot both be zero")
        if self.focal_gamma < 0 or not 0.0 <= self.focal_alpha <= 1.0:
            raise ConfigurationError(f"focal parameters out of range: gamma={self.focal_gamma} "
                                     f"alpha={self.focal_alpha}")


@dataclass
class LossBreakdown:
    """Total loss (differentiable) plus iteration-averaged parts and the matches used."""

    total: Tensor
    cls: float
    box: float
    assignments: List[Assignment]


def focal_loss(logits: Tensor, targets: np.ndarray, gamma: float = 2.0, alpha: float = 0.25,
               normalizer: float = 1.0) -> Tensor:
    """
    Softmax focal loss -alpha_t (1 - p_t)^gamma log p_t summed over queries.

    Args:
        logits: Nq x (C + 1) logits, background last.
        targets: Nq target class ids (C = background).
        gamma: Focusing exponent.
        alpha: Foreground weight.
        normalizer: Divisor of the summed loss.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    nq, width = logits.shape
    if targets.shape != (nq,):
        raise DimensionError(f"{nq} queries need {nq} targets, got shape {targets.shape}")
    background = width - 1
    log_p = F.log_softmax(logits, axis=1)
    log_pt = log_p[np.arange(nq), targets]
    modulation = F.power(1.0 - F.exp(log_pt), gamma) if gamma != 0 else 1.0
    alpha_t = np.where(targets == background, 1.0 - alpha, alpha)
    return -F.sum(log_pt * modulation * alpha_t) * (1.0 / normalizer)


def box_l1_loss(pred_boxes: Tensor, assignment: Assignment, gt_boxes: np.ndarray,
                normalizer: float = 1.0) -> Tensor:
    """Summed |b_i - g_j| over matched pairs, divided by `normalizer`."""
    matched = pred_boxes[assignment.queries]
    return F.sum(F.abs_(matched - gt_boxes[assignment.targets])) * (1.0 / normalizer)


def iteration_loss(logits: Tensor, boxes: Tensor, gt_classes: np.ndarray, gt_boxes: np.ndarray,
                   weights: LossWeights):
    """Match one iteration's predictions and return (total, cls, box, assignment)."""
    nq, width = logits.shape
    with no_grad():
        probs = F.softmax(logits.detach(), axis=1).data
    cost = matching_cost(probs, boxes.data, gt_classes, gt_boxes, weights.cls, weights.box)
    assignment = hungarian_match(cost)
    targets = np.full(nq, width - 1, dtype=np.int64)
    targets[assignment.queries] = gt_classes[assignment.targets]
    normalizer = float(max(1, len(gt_classes)))
    cls = focal_loss(logits, targets, weights.focal_gamma, weights.focal_alpha, normalizer)
    total = cls * weights.cls
    box = None
    if len(gt_classes) and weights.box > 0:
        box = box_l1_loss(boxes, assignment, gt_boxes, normalizer)
        total = total + box * weights.box
    return total, cls, box, assignment


def set_loss(logits: Sequence[Tensor], boxes: Sequence[Tensor], gt_classes: np.ndarray,
             gt_boxes: np.ndarray, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """
    Loss = mean over iterations of cls * L_cls + box * L_box.

    Each iteration is matched on its own. Unmatched queries are supervised to
    background; with no ground truth the loss is classification only.

    Args:
        logits: Per-iteration Nq x (C + 1) logits.
        boxes: Per-iteration Nq x 8 box vectors.
        gt_classes: Ng class ids.
        gt_boxes: Ng x 8 encoded boxes.
        weights: Loss weights.

    Returns:
        LossBreakdown: Differentiable total and its parts.
    """
    if not logits or len(logits) != len(boxes):
        raise DimensionError(f"need matching non-empty iteration lists, got {len(logits)} and {len(boxes)}")
    gt_classes = np.asarray(gt_classes, dtype=np.int64).reshape(-1)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(len(gt_classes), BOX_PARAMS)
    total, cls_sum, box_sum, assignments = None, 0.0, 0.0, []
    for lg, bx in zip(logits, boxes):
        t_total, t_cls, t_box, assignment = iteration_loss(lg, bx, gt_classes, gt_boxes, weights)
        total = t_total if total is None else total + t_total
        cls_sum += t_cls.item()
        box_sum += t_box.item() if t_box is not None else 0.0
        assignments.append(assignment)
    scale = 1.0 / len(logits)
    return LossBreakdown(total * scale, cls_sum * scale, box_sum * scale, assignments)
