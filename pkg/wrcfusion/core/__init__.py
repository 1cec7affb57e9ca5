"""Dense float64 tensors, autodiff, layers, optimizer and checkpoints."""

from wrcfusion.core.tensor import Function, Tensor, as_tensor, is_grad_enabled, no_grad
from wrcfusion.core.nn import Conv2d, LayerNorm, Linear, Module, ModuleList, Parameter
from wrcfusion.core.optim import AdamW, adamw_step, cosine_lr
from wrcfusion.core.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from wrcfusion.core.gradcheck import gradcheck, gradient_errors, numerical_gradient
from wrcfusion.core.profiler import count_macs, mac_scope

__all__ = [
    "Function", "Tensor", "as_tensor", "is_grad_enabled", "no_grad",
    "Conv2d", "LayerNorm", "Linear", "Module", "ModuleList", "Parameter",
    "AdamW", "adamw_step", "cosine_lr",
    "load_checkpoint", "read_checkpoint", "save_checkpoint",
    "gradcheck", "gradient_errors", "numerical_gradient",
    "count_macs", "mac_scope",
]
