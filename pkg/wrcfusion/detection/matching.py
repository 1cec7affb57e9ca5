"""
Set Matching
Optimal one-to-one assignment of ground truths to queries.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from wrcfusion.detection.boxes import BOX_PARAMS
from wrcfusion.errors import ContractError, DimensionError, NumericError


@dataclass
class Assignment:
    """
    Attributes:
        queries: Matched query index per ground truth, ordered by ground truth.
        targets: Ground-truth indices 0..Ng-1.
        total: Summed cost of the matched pairs.
    """

    queries: np.ndarray
    targets: np.ndarray
    total: float

    def pairs(self):
        return list(zip(self.queries.tolist(), self.targets.tolist()))


def hungarian_match(cost: np.ndarray) -> Assignment:
    """
    Minimum-cost assignment of every column (ground truth) to a distinct row (query).

    Raises:
        NumericError: The cost matrix has NaN or infinite entries.
        ContractError: More ground truths than queries.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DimensionError(f"cost must be a Nq x Ng matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise NumericError("matching cost contains non-finite entries")
    nq, ng = cost.shape
    if ng > nq:
        raise ContractError(f"cannot match {ng} ground truths to {nq} queries")
    if ng == 0:
        empty = np.zeros(0, dtype=np.int64)
        return Assignment(empty, empty.copy(), 0.0)
    rows, cols = linear_sum_assignment(cost)
    order = np.argsort(cols)
    rows, cols = rows[order], cols[order]
    return Assignment(rows.astype(np.int64), cols.astype(np.int64), float(cost[rows, cols].sum()))


def matching_cost(class_probs: np.ndarray, pred_boxes: np.ndarray, gt_classes: np.ndarray,
                  gt_boxes: np.ndarray, cls_weight: float, box_weight: float) -> np.ndarray:
    """
    cost[i, j] = cls_weight * (1 - p_i[c_j]) + box_weight * |b_i - g_j|_1.

    Args:
        class_probs: Nq x (C + 1) class probabilities.
        pred_boxes: Nq x 8 predicted box vectors.
        gt_classes: Ng class ids.
        gt_boxes: Ng x 8 encoded ground-truth boxes.
        cls_weight: Classification weight.
        box_weight: Box weight.

    Returns:
        np.ndarray: Nq x Ng cost matrix.
    """
    class_probs = np.asarray(class_probs, dtype=np.float64)
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(len(gt_classes), BOX_PARAMS)
    if class_probs.shape[0] < 1:
        raise ContractError("matching needs at least one prediction")
    if pred_boxes.shape[0] != class_probs.shape[0]:
        raise DimensionError(f"{class_probs.shape[0]} class rows but {pred_boxes.shape[0]} box rows")
    cls_cost = 1.0 - class_probs[:, gt_classes]
    box_cost = np.abs(pred_boxes[:, None, :] - gt_boxes[None, :, :]).sum(axis=2)
    return cls_weight * cls_cost + box_weight * box_cost
