"""
Module System
Parameters, module containers and the basic layers models are made of.
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import CheckpointMismatchError, ConfigurationError

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """
    Learnable tensor with its AdamW moment buffers.

    Attributes:
        name: Dotted path assigned when the owning model enumerates parameters.
        m: First-moment buffer (same shape as data).
        v: Second-moment buffer (same shape as data).
    """

    def __init__(self, data: np.ndarray, name: Optional[str] = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


class Module:
    """Base class: registers Parameters and sub-Modules assigned as attributes."""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name: str, value) -> None:
        params = self.__dict__.get("_parameters")
        if params is None:
            raise AttributeError("Module.__init__() must run before assigning attributes")
        if isinstance(value, Parameter):
            params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} has no forward()")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        """Yield (dotted name, parameter) pairs and stamp the names on the parameters."""
        for name, param in self._parameters.items():
            full = f"{prefix}{name}"
            param.name = full
            yield full, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        """This module, then every sub-module depth first."""
        yield self
        for module in self._modules.values():
            yield from module.modules()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, param.data.copy()) for name, param in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copy arrays into the parameters of this module.

        Raises:
            CheckpointMismatchError: Missing/unexpected names or shape mismatches.
        """
        own = OrderedDict(self.named_parameters())
        problems = []
        missing = [name for name in own if name not in state]
        unexpected = [name for name in state if name not in own]
        if missing:
            problems.append(f"missing parameters: {', '.join(missing[:5])}"
                            + (" ..." if len(missing) > 5 else ""))
        if unexpected:
            problems.append(f"unexpected parameters: {', '.join(unexpected[:5])}"
                            + (" ..." if len(unexpected) > 5 else ""))
        for name, param in own.items():
            if name in state and tuple(state[name].shape) != param.shape:
                problems.append(f"{name}: checkpoint shape {tuple(state[name].shape)} != model shape {param.shape}")
        if problems:
            raise CheckpointMismatchError("checkpoint does not match model; " + "; ".join(problems))
        for name, param in own.items():
            param.data = np.array(state[name], dtype=np.float64)
            param.m = np.zeros_like(param.data)
            param.v = np.zeros_like(param.data)
        logger.debug("Loaded %d parameter arrays", len(own))


class ModuleList(Module):
    """Indexable list of sub-modules registered under their positions."""

    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)


def _uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=tuple(shape))


class Linear(Module):
    """y = x W + b for N x in (or length-in) inputs."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        shape = (in_features, out_features)
        self.weight = Parameter(np.zeros(shape) if zero_init else _uniform(rng, shape, in_features))
        self.bias = None
        if bias:
            self.bias = Parameter(np.zeros(out_features) if zero_init else _uniform(rng, (out_features,), in_features))

    def forward(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 1
        if squeeze:
            x = F.reshape(x, (1, x.shape[0]))
        out = F.matmul(x, self.weight)
        if self.bias is not None:
            out = F.add(out, self.bias)
        return F.reshape(out, (self.out_features,)) if squeeze else out


class Conv2d(Module):
    """2-D convolution layer over C x H x W maps."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, dilation: int = 1, groups: int = 1,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ConfigurationError(f"Conv2d channels ({in_channels} -> {out_channels}) "
                                     f"not divisible by groups={groups}")
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        self.weight = Parameter(np.zeros(shape) if zero_init else _uniform(rng, shape, fan_in))
        self.bias = None
        if bias:
            self.bias = Parameter(np.zeros(out_channels) if zero_init else _uniform(rng, (out_channels,), fan_in))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding,
                        dilation=self.dilation, groups=self.groups)


class LayerNorm(Module):
    """Layer normalization over the last axis with learnable scale and shift."""

    def __init__(self, features: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, eps=self.eps)
