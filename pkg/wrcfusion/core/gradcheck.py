"""
Gradient Checking
Central finite-difference verification of backward passes.
"""

from typing import Callable, List, Sequence

import numpy as np

from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import ContractError


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """
    Central finite differences of the scalar `fn()` with respect to `tensor`.

    `tensor.data` is perturbed in place and restored afterwards.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = fn().item()
        flat[i] = orig - h
        minus = fn().item()
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error, guarded against all-zero gradients."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradient_errors(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> List[float]:
    """Relative error of backward against finite differences for each input."""
    for t in inputs:
        if not t.requires_grad:
            raise ContractError("gradcheck inputs must require grad")
        t.grad = None
    loss = fn()
    if loss.size != 1:
        raise ContractError(f"gradcheck needs a scalar function, got shape {loss.shape}")
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    return [relative_error(a, numerical_gradient(fn, t, h)) for a, t in zip(analytic, inputs)]


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5, rtol: float = 1e-6) -> bool:
    """True when every input's gradient agrees with finite differences within `rtol`."""
    return all(err < rtol for err in gradient_errors(fn, inputs, h))
