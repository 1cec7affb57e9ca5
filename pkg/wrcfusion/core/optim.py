"""
Optimization
AdamW with decoupled weight decay and the cosine learning-rate schedule.
"""

import math
from typing import Iterable, Sequence, Tuple

import numpy as np

from wrcfusion.core.nn import Parameter
from wrcfusion.errors import ConfigurationError, ContractError


def cosine_lr(step: int, total: int, lr0: float, floor: float = 0.0) -> float:
    """
    Cosine-annealed learning rate.

    Args:
        step: Current optimizer step (0-based).
        total: Step at which the schedule reaches `floor`.
        lr0: Initial learning rate.
        floor: Final learning rate.

    Returns:
        float: lr0 at step 0, floor at step >= total.
    """
    if total <= 0:
        raise ConfigurationError(f"cosine_lr needs total > 0, got {total}")
    if step >= total:
        return float(floor)
    progress = max(step, 0) / total
    return float(floor + 0.5 * (lr0 - floor) * (1.0 + math.cos(math.pi * progress)))


def adamw_step(params: Iterable[Parameter], lr: float, step: int,
               betas: Tuple[float, float] = (0.9, 0.999), weight_decay: float = 0.01,
               eps: float = 1e-8) -> None:
    """
    Apply one AdamW update in place.

    Args:
        params: Parameters with populated gradients.
        lr: Learning rate for this step.
        step: 1-based step count used for bias correction.
        betas: Moment decay rates.
        weight_decay: Decoupled weight decay coefficient.
        eps: Denominator floor.

    Raises:
        ContractError: A parameter has no gradient.
    """
    params = list(params)
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise ContractError(f"AdamW step with missing gradients: {', '.join(missing[:5])}"
                            + (" ..." if len(missing) > 5 else ""))
    b1, b2 = betas
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for p in params:
        g = p.grad
        p.m = b1 * p.m + (1.0 - b1) * g
        p.v = b2 * p.v + (1.0 - b2) * g * g
        m_hat = p.m / c1
        v_hat = p.v / c2
        p.data = p.data * (1.0 - lr * weight_decay) - lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """Stateful wrapper tracking the step count for `adamw_step`."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4,
                 betas: Tuple[float, float] = (0.9, 0.999), weight_decay: float = 0.01,
                 grad_clip: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.steps = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params if p.grad is not None)))

    def step(self, lr: float = None) -> None:
        if self.grad_clip > 0:
            norm = self.grad_norm()
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
                for p in self.params:
                    if p.grad is not None:
                        p.grad = p.grad * scale
        self.steps += 1
        adamw_step(self.params, self.lr if lr is None else lr, self.steps,
                   betas=self.betas, weight_decay=self.weight_decay)
