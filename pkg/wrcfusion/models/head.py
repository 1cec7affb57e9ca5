"""
Detection Head
Shared class and box predictors applied over residual query refinements.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import LayerNorm, Linear, Module, ModuleList
from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import BOX_PARAMS
from wrcfusion.errors import ConfigurationError


@dataclass
class HeadOutput:
    """Per-iteration predictions: Nq x (classes + 1) logits (background last) and Nq x 8 box vectors."""

    logits: List[Tensor]
    boxes: List[Tensor]
    embeddings: List[Tensor]

    @property
    def iterations(self) -> int:
        return len(self.logits)


class RefinementFFN(Module):
    """Q + FFN(LN(Q))."""

    def __init__(self, dim: int, rng: np.random.Generator, zero_init: bool = False):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.fc1 = Linear(dim, dim, rng)
        self.fc2 = Linear(dim, dim, rng, zero_init=zero_init)

    def forward(self, q: Tensor) -> Tensor:
        return q + self.fc2(F.relu(self.fc1(self.norm(q))))


class DetectionHead(Module):
    def __init__(self, dim: int, num_classes: int, iterations: int, rng: np.random.Generator):
        super().__init__()
        if iterations < 1:
            raise ConfigurationError(f"head needs at least one iteration, got {iterations}")
        if num_classes < 1:
            raise ConfigurationError(f"head needs at least one class, got {num_classes}")
        self.iterations = iterations
        self.num_classes = num_classes
        self.classifier = Linear(dim, num_classes + 1, rng)
        self.box_hidden = Linear(dim, dim, rng)
        self.box_out = Linear(dim, BOX_PARAMS, rng)
        self.refine = ModuleList([RefinementFFN(dim, rng) for _ in range(iterations - 1)])

    def predict(self, q: Tensor, reference: Tensor):
        """Class logits and box vector; (u, v) are offsets from the reference point."""
        nq = q.shape[0]
        anchor = F.concat([reference, np.zeros((nq, BOX_PARAMS - 2))], axis=1)
        return self.classifier(q), self.box_out(F.relu(self.box_hidden(q))) + anchor

    def forward(self, fused: Tensor, reference: Tensor) -> HeadOutput:
        logits, boxes, embeddings = [], [], []
        q = fused
        for t in range(self.iterations):
            cls, box = self.predict(q, reference)
            logits.append(cls)
            boxes.append(box)
            embeddings.append(q)
            if t < self.iterations - 1:
                q = self.refine[t](q)
        return HeadOutput(logits, boxes, embeddings)


def head_forward(head: DetectionHead, fused: Tensor, reference: Tensor) -> HeadOutput:
    """
    Run T = head.iterations predict/refine rounds; every round's output is kept
    for auxiliary supervision.
    """
    return head(fused, reference)
