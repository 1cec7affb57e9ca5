"""
Tensor
Dense float64 tensor with a dynamic reverse-mode autodiff tape.

Every differentiable kernel is a `Function` subclass: `forward` works on raw
numpy arrays, `backward` maps the output gradient to one gradient per input.
`Function.apply` records the node on the output tensor, so the graph is
rebuilt on every forward pass (data-dependent loops are fine).
"""

import contextlib
import logging
import threading
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from wrcfusion.errors import ContractError, DimensionError, InternalError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether new operations record graph nodes on this thread."""
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(*arrays, **kwargs)` and `backward(grad)`.
    `backward` returns one gradient (or None) per input tensor.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors
        self.saved: dict = {}

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and attach the node to the result.

        Args:
            *tensors: Input tensors.
            **kwargs: Non-differentiable arguments forwarded to `forward`.

        Returns:
            Tensor: The result, linked to this node when any input needs grad.
        """
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, _node=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so `grad` matches `shape`."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """
    Dense N-dimensional float64 array participating in the autodiff graph.

    Attributes:
        data: Row-major float64 payload.
        requires_grad: Whether gradients are tracked for this tensor.
        grad: Same-shape gradient buffer, populated by `backward`.
    """

    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 _node: Optional[Function] = None):
        if isinstance(data, Tensor):
            data = data.data
        data = np.asarray(data, dtype=np.float64)
        self.data = data if data.flags.c_contiguous else data.copy()
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node = _node
        self._consumed = False

    # ---------- basic properties ----------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def node(self) -> Optional[Function]:
        return self._node

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # ---------- autodiff ----------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Populate `.grad` on every requires_grad ancestor.

        Args:
            grad: Seed gradient; only scalars may omit it.

        Raises:
            ContractError: Non-scalar loss without a seed, or a second call on
                the same graph.
            InternalError: The recorded graph contains a cycle.
        """
        if self._consumed:
            raise ContractError("backward() was already called on this graph; run a new forward pass")
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order = self._topological_order()
        grads = {id(self): grad}
        for tensor in order:
            g = grads.pop(id(tensor), None)
            if g is None:
                continue
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            node = tensor._node
            if node is None:
                continue
            input_grads = node.backward(g)
            if len(input_grads) != len(node.tensors):
                raise InternalError(f"{type(node).__name__}.backward returned {len(input_grads)} "
                                    f"gradients for {len(node.tensors)} inputs")
            for parent, pg in zip(node.tensors, input_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise InternalError(f"{type(node).__name__} produced gradient {pg.shape} "
                                        f"for input {parent.shape}")
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        self._consumed = True

    def _topological_order(self) -> List["Tensor"]:
        """Reverse topological order of the graph rooted here (iterative DFS)."""
        visiting, done = set(), set()
        order: List[Tensor] = []
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            tensor, expanded = stack.pop()
            key = id(tensor)
            if expanded:
                visiting.discard(key)
                done.add(key)
                order.append(tensor)
                continue
            if key in done:
                continue
            if key in visiting:
                raise InternalError("cycle detected in autodiff graph")
            visiting.add(key)
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.tensors:
                    if not parent.requires_grad:
                        continue
                    pkey = id(parent)
                    if pkey in visiting:
                        raise InternalError("cycle detected in autodiff graph")
                    if pkey not in done:
                        stack.append((parent, False))
        order.reverse()
        return order

    # ---------- operator sugar ----------
    def __add__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.div(other, self)

    def __neg__(self) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from wrcfusion.core import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.getitem(self, index)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        from wrcfusion.core import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from wrcfusion.core import functional as F
        return F.transpose(self, axes if axes else None)

    @property
    def T(self) -> "Tensor":
        return self.transpose()


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap constants as non-differentiable tensors; pass tensors through."""
    return value if isinstance(value, Tensor) else Tensor(value)
