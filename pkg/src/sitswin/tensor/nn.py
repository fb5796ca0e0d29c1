"""
Parameter containers and the basic layers built on the tensor ops.

A `Module` discovers its parameters from its attributes: `Parameter`
values, child modules and lists of either. Names are dotted paths in
attribute declaration order, so the parameter list is a pure function of the
constructor arguments.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from sitswin.errors import DimensionError
from sitswin.tensor import init, ops
from sitswin.tensor.core import Tensor


class Parameter(Tensor):
    """Leaf tensor that requires grad."""

    def __init__(self, data: np.ndarray) -> None:
        super().__init__(data, requires_grad=True)


class Module:
    """Base class for everything holding parameters."""

    training: bool = True

    def train(self, mode: bool = True) -> "Module":
        """Set training mode here and in every child module."""
        self.training = mode
        for value in vars(self).values():
            for child in value if isinstance(value, (list, tuple)) else (value,):
                if isinstance(child, Module):
                    child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__}.forward not implemented")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield from _walk(value, prefix + name)

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy arrays into the parameters, casting to each parameter's dtype."""
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise DimensionError(f"{type(self).__name__}.load_state_dict: missing {missing}, unexpected {unexpected}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(
                    f"{type(self).__name__}.load_state_dict: tensor '{name}' has shape {value.shape}, model expects {p.shape}"
                )
            p.data = value.astype(p.dtype, copy=True)


def _walk(value: object, name: str) -> Iterator[Tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


class Linear(Module):
    """y = x W + b over the last axis; W is stored (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(init.trunc_normal((in_features, out_features), rng))
        self.bias: Optional[Parameter] = Parameter(init.zeros((out_features,))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"Linear.forward: last axis {x.shape[-1]} != in_features {self.in_features}")
        lead = x.shape[:-1]
        y = ops.matmul(x.reshape(-1, self.in_features), self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(lead + (self.out_features,))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        self.eps = eps
        self.gamma = Parameter(init.ones((dim,)))
        self.beta = Parameter(init.zeros((dim,)))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    """Active only in training mode; rate 0 is the identity."""

    def __init__(self, rate: float, rng: np.random.Generator) -> None:
        self.rate = rate
        self._rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        return ops.dropout(x, self.rate, self._rng)


class Conv3d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Union[int, Sequence[int]],
        rng: np.random.Generator,
        stride: Union[int, Sequence[int]] = 1,
        padding: Union[int, Sequence[int]] = 0,
        bias: bool = True,
    ) -> None:
        kernel = ops._triple(kernel)
        self.stride = ops._triple(stride)
        self.padding = ops._triple(padding)
        self.weight = Parameter(init.he_normal((out_channels, in_channels) + kernel, rng))
        self.bias: Optional[Parameter] = Parameter(init.zeros((out_channels,))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose3d(Module):
    """Upsampling by `stride` with kernel == stride, no bias."""

    def __init__(self, in_channels: int, out_channels: int, stride: Union[int, Sequence[int]], rng: np.random.Generator) -> None:
        self.stride = ops._triple(stride)
        self.weight = Parameter(init.he_normal((in_channels, out_channels) + self.stride, rng))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d_transpose(x, self.weight, self.stride)
