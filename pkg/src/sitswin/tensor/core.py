"""
Dense tensor with reverse-mode differentiation.

A `Tensor` wraps a numpy array. Every differentiable op is a `Function`
subclass; applying it records the function as the creator of its output, so
the recorded graph is the chain of creators reachable from a loss. `backward`
walks that graph once in reverse topological order and then releases it:
saved arrays are dropped and a second backward through the same graph raises
`GraphError`.
"""

from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from sitswin.errors import DimensionError, GraphError, NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_DEFAULT_DTYPE: np.dtype = np.dtype(np.float32)
_CHECK_FINITE: bool = True
_grad_mode = threading.local()


def get_default_dtype() -> np.dtype:
    """Floating dtype given to tensors built from non-float data."""
    return _DEFAULT_DTYPE


def set_default_dtype(dtype: Any) -> None:
    """Switch the default floating dtype (float32 or float64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"set_default_dtype: only float32/float64 are supported, got {dtype}")
    _DEFAULT_DTYPE = dtype


@contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Temporarily change the default dtype; float64 is used by gradient checks."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_check_finite(enabled: bool) -> None:
    """Turn the NaN/Inf check on forward outputs on or off."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run forward ops without recording them (per thread)."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the
    gradient of the output to one gradient (or None) per input. Values needed
    by `backward` go into `self.saved`.
    """

    name: str = "op"

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs: Tuple["Tensor", ...] = inputs
        self.saved: Dict[str, Any] = {}
        self.released: bool = False

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward not implemented")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward not implemented")

    def release(self) -> None:
        self.saved.clear()
        self.released = True

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Run forward on the inputs' data and record the op when gradients are needed."""
        func = cls(*inputs)
        out = func.forward(*(t.data for t in inputs), **kwargs)
        if _CHECK_FINITE and out.size and not np.isfinite(out).all():
            if all(np.isfinite(t.data).all() for t in inputs):
                raise NumericalError(f"{cls.name}: non-finite output from finite inputs")
        record = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if not record:
            func.saved.clear()
        return Tensor(out, requires_grad=record, _creator=func if record else None)

    def _wanted(self, position: int, grad: np.ndarray, shape: Tuple[int, ...]) -> Optional[np.ndarray]:
        """Unbroadcast gradient for input `position`, or None when that input is a constant."""
        if not self.inputs[position].requires_grad:
            return None
        return self.unbroadcast(grad, shape)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum a broadcast gradient back down to `shape`."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """Dense row-major array with an optional gradient."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Any = None,
        _creator: Optional[Function] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad: bool = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = _creator

    # ---- Introspection -----------------------------------------------------

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
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"Tensor.item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise DimensionError(f"Tensor.accumulate_grad: gradient shape {grad.shape} != tensor shape {self.shape}")
        grad = grad.astype(self.dtype, copy=False)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self) -> None:
        """Populate `.grad` of every requires_grad leaf reachable from this scalar."""
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ---- Operators (delegated to ops) --------------------------------------

    def _lift(self, other: Any) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other: Any) -> "Tensor":
        from sitswin.tensor import ops
        return ops.add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from sitswin.tensor import ops
        return ops.sub(self, self._lift(other))

    def __mul__(self, other: Any) -> "Tensor":
        from sitswin.tensor import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        from sitswin.tensor import ops
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from sitswin.tensor import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from sitswin.tensor import ops
        return ops.matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        from sitswin.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes: int) -> "Tensor":
        from sitswin.tensor import ops
        return ops.permute(self, axes)

    def sum(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        from sitswin.tensor import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        from sitswin.tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def __getitem__(self, key: Any) -> "Tensor":
        from sitswin.tensor import ops
        return ops.index(self, key)


@dataclass(frozen=True)
class GraphEntry:
    """One recorded op: its name, the ids of its inputs and the id of its output."""

    op: str
    inputs: Tuple[int, ...]
    output: int


class Graph:
    """Recorded ops reachable from a root tensor, in execution (topological) order."""

    def __init__(self, root: Tensor, order: List[Tensor]) -> None:
        self.root = root
        self.order = order

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        """Collect every tensor produced by a recorded op on the way to `root`."""
        order: List[Tensor] = []
        visited: set[int] = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or node.creator is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.creator.inputs:
                if parent.creator is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(root, order)

    @property
    def entries(self) -> List[GraphEntry]:
        return [
            GraphEntry(node.creator.name, tuple(id(t) for t in node.creator.inputs), id(node))
            for node in self.order
            if node.creator is not None
        ]

    def backward(self, seed: np.ndarray) -> None:
        """Propagate `seed` (d root / d root) to every leaf, then release the tape."""
        grads: Dict[int, np.ndarray] = {id(self.root): seed}
        for node in reversed(self.order):
            func = node.creator
            if func is None:
                continue
            if func.released:
                raise GraphError(f"backward: graph through '{func.name}' was already released by an earlier backward")
            grad = grads.pop(id(node), None)
            if grad is None:
                func.release()
                continue
            input_grads = func.backward(grad)
            for parent, parent_grad in zip(func.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.creator is None:
                    parent.accumulate_grad(parent_grad)
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad
            func.release()


def backward(loss: Tensor) -> None:
    """Reverse-mode pass from a scalar loss; the recorded graph is freed afterwards."""
    if loss.size != 1:
        raise DimensionError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("backward: loss does not depend on any tensor that requires grad")
    seed = np.ones(loss.shape, dtype=loss.dtype)
    if loss.creator is None:
        loss.accumulate_grad(seed)
        return
    if loss.creator.released:
        raise GraphError("backward: graph already released; run the forward pass again")
    Graph.trace(loss).backward(seed)
