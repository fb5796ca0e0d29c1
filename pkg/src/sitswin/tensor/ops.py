"""
Differentiable operations.

Each op is a `Function` with a forward on numpy arrays and the matching
backward. The lower-case wrappers at the bottom validate arguments and are
the public entry points.
"""

from __future__ import annotations

import itertools
import math
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from einops import rearrange as _rearrange
from scipy.special import erf

from sitswin.errors import DegenerateError, DimensionError, ParameterError, RangeError, UnsupportedError
from sitswin.tensor.core import Function, Tensor

Triple = Tuple[int, int, int]
Axis = Union[int, Tuple[int, ...], None]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---- Elementwise -------------------------------------------------------------

class Add(Function):
    name = "add"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved["shapes"] = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray):
        sa, sb = self.saved["shapes"]
        return self._wanted(0, grad, sa), self._wanted(1, grad, sb)


class Sub(Function):
    name = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved["shapes"] = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray):
        sa, sb = self.saved["shapes"]
        return self._wanted(0, grad, sa), self._wanted(1, -grad, sb)


class Mul(Function):
    name = "mul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved["a"], self.saved["b"] = a, b
        return a * b

    def backward(self, grad: np.ndarray):
        a, b = self.saved["a"], self.saved["b"]
        grad_a = self.unbroadcast(grad * b, a.shape) if self.inputs[0].requires_grad else None
        grad_b = self.unbroadcast(grad * a, b.shape) if self.inputs[1].requires_grad else None
        return grad_a, grad_b


class Scale(Function):
    name = "scale"

    def forward(self, x: np.ndarray, factor: float) -> np.ndarray:
        self.saved["factor"] = factor
        return x * x.dtype.type(factor)

    def backward(self, grad: np.ndarray):
        return (grad * grad.dtype.type(self.saved["factor"]),)


class Gelu(Function):
    name = "gelu"

    def forward(self, x: np.ndarray) -> np.ndarray:
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        self.saved["x"], self.saved["cdf"] = x, cdf
        return x * cdf

    def backward(self, grad: np.ndarray):
        x, cdf = self.saved["x"], self.saved["cdf"]
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (grad * (cdf + x * pdf),)


class LeakyRelu(Function):
    name = "leaky_relu"

    def forward(self, x: np.ndarray, slope: float) -> np.ndarray:
        positive = x > 0
        self.saved["positive"], self.saved["slope"] = positive, slope
        return np.where(positive, x, x * x.dtype.type(slope))

    def backward(self, grad: np.ndarray):
        positive, slope = self.saved["positive"], self.saved["slope"]
        return (np.where(positive, grad, grad * grad.dtype.type(slope)),)


class Dropout(Function):
    name = "dropout"

    def forward(self, x: np.ndarray, keep: np.ndarray) -> np.ndarray:
        self.saved["keep"] = keep
        return x * keep

    def backward(self, grad: np.ndarray):
        return (grad * self.saved["keep"],)


# ---- Shape -------------------------------------------------------------------

class Reshape(Function):
    name = "reshape"

    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.saved["shape"] = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.saved["shape"]),)


class Permute(Function):
    name = "permute"

    def forward(self, x: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
        self.saved["axes"] = axes
        return np.ascontiguousarray(np.transpose(x, axes))

    def backward(self, grad: np.ndarray):
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.saved["axes"]))),)


class Rearrange(Function):
    """einops layout change; backward applies the reversed pattern."""

    name = "rearrange"

    def forward(self, x: np.ndarray, pattern: str, lengths: dict) -> np.ndarray:
        self.saved["pattern"], self.saved["lengths"] = pattern, lengths
        return np.ascontiguousarray(_rearrange(x, pattern, **lengths))

    def backward(self, grad: np.ndarray):
        lhs, rhs = self.saved["pattern"].split("->")
        return (np.ascontiguousarray(_rearrange(grad, f"{rhs.strip()} -> {lhs.strip()}", **self.saved["lengths"])),)


class Roll(Function):
    name = "roll"

    def forward(self, x: np.ndarray, shifts: Tuple[int, ...], axes: Tuple[int, ...]) -> np.ndarray:
        self.saved["shifts"], self.saved["axes"] = shifts, axes
        return np.roll(x, shifts, axis=axes)

    def backward(self, grad: np.ndarray):
        return (np.roll(grad, tuple(-s for s in self.saved["shifts"]), axis=self.saved["axes"]),)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.saved["axis"] = axis
        self.saved["sizes"] = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray):
        edges = np.cumsum(self.saved["sizes"])[:-1]
        return tuple(np.split(grad, edges, axis=self.saved["axis"]))


class Index(Function):
    name = "index"

    def forward(self, x: np.ndarray, key: Any) -> np.ndarray:
        self.saved["key"], self.saved["shape"], self.saved["dtype"] = key, x.shape, x.dtype
        return np.ascontiguousarray(x[key])

    def backward(self, grad: np.ndarray):
        out = np.zeros(self.saved["shape"], dtype=self.saved["dtype"])
        out[self.saved["key"]] = grad
        return (out,)


class TakeRows(Function):
    """Gather rows of a table by an integer index array."""

    name = "take_rows"

    def forward(self, table: np.ndarray, index: np.ndarray) -> np.ndarray:
        self.saved["index"], self.saved["shape"] = index, table.shape
        return table[index]

    def backward(self, grad: np.ndarray):
        out = np.zeros(self.saved["shape"], dtype=grad.dtype)
        np.add.at(out, self.saved["index"], grad)
        return (out,)


class Sum(Function):
    name = "sum"

    def forward(self, x: np.ndarray, axis: Axis, keepdims: bool) -> np.ndarray:
        self.saved["shape"], self.saved["axis"], self.saved["keepdims"] = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        shape, axis, keepdims = self.saved["shape"], self.saved["axis"], self.saved["keepdims"]
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, shape).copy(),)


# ---- Linear algebra and normalisation ----------------------------------------

class MatMul(Function):
    name = "matmul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved["a"], self.saved["b"] = a, b
        return np.matmul(a, b)

    def backward(self, grad: np.ndarray):
        a, b = self.saved["a"], self.saved["b"]
        grad_a = grad_b = None
        if self.inputs[0].requires_grad:
            grad_a = self.unbroadcast(np.matmul(grad, np.swapaxes(b, -1, -2)), a.shape)
        if self.inputs[1].requires_grad:
            grad_b = self.unbroadcast(np.matmul(np.swapaxes(a, -1, -2), grad), b.shape)
        return grad_a, grad_b


class SoftmaxLast(Function):
    name = "softmax_last"

    def forward(self, x: np.ndarray) -> np.ndarray:
        shifted = np.exp(x - x.max(axis=-1, keepdims=True))
        y = shifted / shifted.sum(axis=-1, keepdims=True)
        self.saved["y"] = y
        return y

    def backward(self, grad: np.ndarray):
        y = self.saved["y"]
        return (y * (grad - (grad * y).sum(axis=-1, keepdims=True)),)


def _normalize(x: np.ndarray, axes: Tuple[int, ...], eps: float) -> Tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=axes, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    rstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    return centered * rstd, rstd


def _normalize_backward(grad_xhat: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    mean_g = grad_xhat.mean(axis=axes, keepdims=True)
    mean_gx = (grad_xhat * xhat).mean(axis=axes, keepdims=True)
    return rstd * (grad_xhat - mean_g - xhat * mean_gx)


class LayerNorm(Function):
    name = "layer_norm"

    def forward(self, x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
        xhat, rstd = _normalize(x, (-1,), eps)
        self.saved["xhat"], self.saved["rstd"], self.saved["gamma"] = xhat, rstd, gamma
        return xhat * gamma + beta

    def backward(self, grad: np.ndarray):
        xhat, rstd, gamma = self.saved["xhat"], self.saved["rstd"], self.saved["gamma"]
        lead = tuple(range(grad.ndim - 1))
        grad_gamma = (grad * xhat).sum(axis=lead)
        grad_beta = grad.sum(axis=lead)
        grad_x = _normalize_backward(grad * gamma, xhat, rstd, (-1,))
        return grad_x, grad_gamma, grad_beta


class InstanceNorm(Function):
    """Per-sample, per-channel normalisation over the spatial axes of (B, C, ...)."""

    name = "instance_norm"

    def forward(self, x: np.ndarray, eps: float) -> np.ndarray:
        axes = tuple(range(2, x.ndim))
        xhat, rstd = _normalize(x, axes, eps)
        self.saved["xhat"], self.saved["rstd"], self.saved["axes"] = xhat, rstd, axes
        return xhat

    def backward(self, grad: np.ndarray):
        return (_normalize_backward(grad, self.saved["xhat"], self.saved["rstd"], self.saved["axes"]),)


# ---- Convolutions ------------------------------------------------------------

def _conv_output_extents(spatial: Sequence[int], kernel: Sequence[int], stride: Triple, pad: Triple) -> Triple:
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(spatial, kernel, stride, pad))


class Conv3d(Function):
    """
    Cross-correlation over (D, H, W).

    Each kernel offset contributes one channel contraction of a strided view
    of the padded input, so memory stays at one input-sized slice.
    """

    name = "conv3d"

    def forward(self, x: np.ndarray, w: np.ndarray, *bias: np.ndarray, stride: Triple, pad: Triple) -> np.ndarray:
        kd, kh, kw = w.shape[2:]
        out_dims = _conv_output_extents(x.shape[2:], (kd, kh, kw), stride, pad)
        xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1]), (pad[2], pad[2])))
        out = np.zeros((w.shape[0], x.shape[0]) + out_dims, dtype=x.dtype)
        for i, j, k in itertools.product(range(kd), range(kh), range(kw)):
            view = xp[:, :, self._span(i, 0, out_dims, stride), self._span(j, 1, out_dims, stride), self._span(k, 2, out_dims, stride)]
            out += np.tensordot(w[:, :, i, j, k], view, axes=([1], [1]))
        out = np.moveaxis(out, 0, 1)
        if bias:
            out = out + bias[0].reshape(1, -1, 1, 1, 1)
        self.saved.update(xp=xp, w=w, stride=stride, pad=pad, out_dims=out_dims, has_bias=bool(bias))
        return np.ascontiguousarray(out)

    @staticmethod
    def _span(offset: int, axis: int, out_dims: Triple, stride: Triple) -> slice:
        return slice(offset, offset + stride[axis] * (out_dims[axis] - 1) + 1, stride[axis])

    def backward(self, grad: np.ndarray):
        xp, w = self.saved["xp"], self.saved["w"]
        stride, pad, out_dims = self.saved["stride"], self.saved["pad"], self.saved["out_dims"]
        kd, kh, kw = w.shape[2:]
        grad_t = np.moveaxis(grad, 1, 0)
        grad_xp = np.zeros_like(xp)
        grad_w = np.zeros_like(w)
        for i, j, k in itertools.product(range(kd), range(kh), range(kw)):
            spans = (slice(None), slice(None), self._span(i, 0, out_dims, stride), self._span(j, 1, out_dims, stride), self._span(k, 2, out_dims, stride))
            grad_w[:, :, i, j, k] = np.tensordot(grad_t, xp[spans], axes=([1, 2, 3, 4], [0, 2, 3, 4]))
            grad_xp[spans] += np.moveaxis(np.tensordot(w[:, :, i, j, k], grad_t, axes=([0], [0])), 0, 1)
        d, h, wd = xp.shape[2:]
        grad_x = grad_xp[:, :, pad[0]:d - pad[0], pad[1]:h - pad[1], pad[2]:wd - pad[2]]
        grads = (np.ascontiguousarray(grad_x), grad_w)
        if self.saved["has_bias"]:
            grads += (grad.sum(axis=(0, 2, 3, 4)),)
        return grads


class ConvTranspose3d(Function):
    """Transposed convolution with kernel == stride: every input voxel paints one disjoint block."""

    name = "conv3d_transpose"

    def forward(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        b, _, d, h, wd = x.shape
        f, kd, kh, kw = w.shape[1:]
        self.saved["x"], self.saved["w"] = x, w
        out = np.einsum("bcdhw,cfijk->bfdihjwk", x, w, optimize=True)
        return np.ascontiguousarray(out).reshape(b, f, d * kd, h * kh, wd * kw)

    def backward(self, grad: np.ndarray):
        x, w = self.saved["x"], self.saved["w"]
        b, _, d, h, wd = x.shape
        f, kd, kh, kw = w.shape[1:]
        blocks = grad.reshape(b, f, d, kd, h, kh, wd, kw)
        grad_x = np.einsum("bfdihjwk,cfijk->bcdhw", blocks, w, optimize=True)
        grad_w = np.einsum("bcdhw,bfdihjwk->cfijk", x, blocks, optimize=True)
        return grad_x, grad_w


# ---- Loss --------------------------------------------------------------------

class CrossEntropy(Function):
    """Mean negative log-likelihood over non-ignored pixels of (B, K, ...) logits."""

    name = "cross_entropy"

    def forward(self, logits: np.ndarray, labels: np.ndarray, ignore_id: int) -> np.ndarray:
        z = np.moveaxis(logits, 1, -1)
        valid = labels != ignore_id
        count = int(valid.sum())
        if count == 0:
            raise DegenerateError("cross_entropy: every pixel carries the ignore id")
        safe = np.where(valid, labels, 0).astype(np.int64)
        peak = z.max(axis=-1, keepdims=True)
        exp = np.exp(z - peak)
        total = exp.sum(axis=-1, keepdims=True)
        lse = (peak + np.log(total))[..., 0]
        picked = np.take_along_axis(z, safe[..., None], axis=-1)[..., 0]
        loss = ((lse - picked) * valid).sum() / count
        self.saved.update(prob=exp / total, safe=safe, valid=valid, count=count)
        return np.asarray(loss, dtype=logits.dtype)

    def backward(self, grad: np.ndarray):
        prob, safe, valid, count = (self.saved[k] for k in ("prob", "safe", "valid", "count"))
        delta = prob.copy()
        np.put_along_axis(delta, safe[..., None], np.take_along_axis(delta, safe[..., None], axis=-1) - 1, axis=-1)
        delta *= (valid[..., None] * (grad / count)).astype(delta.dtype)
        return (np.ascontiguousarray(np.moveaxis(delta, -1, 1)),)


# ---- Public wrappers -----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: axes {tuple(axes)} are not a permutation of {x.ndim} axes")
    return Permute.apply(x, axes=tuple(axes))


def rearrange(x: Tensor, pattern: str, **lengths: int) -> Tensor:
    """Differentiable einops.rearrange; pass enough lengths to also invert the pattern."""
    return Rearrange.apply(x, pattern=pattern, lengths=lengths)


def roll(x: Tensor, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    return Roll.apply(x, shifts=tuple(int(s) for s in shifts), axes=tuple(axes))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(first) or any(a != b for i, (a, b) in enumerate(zip(t.shape, first)) if i != axis % len(first)):
            raise DimensionError(f"concat: shapes {[t.shape for t in tensors]} differ off axis {axis}")
    return Concat.apply(*tensors, axis=axis)


def index(x: Tensor, key: Any) -> Tensor:
    return Index.apply(x, key=key)


def take_rows(table: Tensor, rows: np.ndarray) -> Tensor:
    return TakeRows.apply(table, index=np.asarray(rows, dtype=np.int64))


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading batch axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot contract shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch prefixes of {a.shape} and {b.shape} do not broadcast") from None
    return MatMul.apply(a, b)


def softmax_last(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax_last: empty last axis in shape {x.shape}")
    return SoftmaxLast.apply(x)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ParameterError(f"layer_norm: eps must be > 0, got {eps!r}")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match last axis of {x.shape}")
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ParameterError(f"instance_norm: eps must be > 0, got {eps!r}")
    if x.ndim < 3:
        raise DimensionError(f"instance_norm: expected (B, C, ...) input, got {x.shape}")
    return InstanceNorm.apply(x, eps=eps)


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact erf form of the Gaussian CDF."""
    return Gelu.apply(x)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    return LeakyRelu.apply(x, slope=slope)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Zero entries with probability `rate`, scaling survivors by 1 / (1 - rate)."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout: rate must be in [0, 1), got {rate!r}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return Dropout.apply(x, keep=keep)


def _triple(value: Union[int, Sequence[int]]) -> Triple:
    if isinstance(value, int):
        return (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise DimensionError(f"expected a triple, got {value}")
    return value


def conv3d(
    x: Tensor,
    w: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, Sequence[int]] = 1,
    pad: Union[int, Sequence[int]] = 0,
) -> Tensor:
    """(B, C, D, H, W) * (F, C, kd, kh, kw) -> (B, F, D', H', W'), cross-correlation convention."""
    stride, pad = _triple(stride), _triple(pad)
    if x.ndim != 5 or w.ndim != 5 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv3d: input {x.shape} and kernel {w.shape} are incompatible")
    if bias is not None and bias.shape != (w.shape[0],):
        raise DimensionError(f"conv3d: bias {bias.shape} does not match {w.shape[0]} filters")
    for n, k, p in zip(x.shape[2:], w.shape[2:], pad):
        if k > n + 2 * p:
            raise DimensionError(f"conv3d: kernel {w.shape[2:]} larger than padded input {x.shape[2:]} (pad {pad})")
    inputs = (x, w) if bias is None else (x, w, bias)
    return Conv3d.apply(*inputs, stride=stride, pad=pad)


def conv3d_transpose(x: Tensor, w: Tensor, stride: Union[int, Sequence[int]] = 2) -> Tensor:
    """(B, C, D, H, W) with (C, F, k, k, k), k == stride -> (B, F, D*s, H*s, W*s)."""
    stride = _triple(stride)
    if x.ndim != 5 or w.ndim != 5 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"conv3d_transpose: input {x.shape} and kernel {w.shape} are incompatible")
    if tuple(w.shape[2:]) != stride:
        raise UnsupportedError(f"conv3d_transpose: kernel {w.shape[2:]} must equal stride {stride}")
    return ConvTranspose3d.apply(x, w)


def cross_entropy(logits: Tensor, labels: np.ndarray, ignore_id: int = 255) -> Tensor:
    """Mean pixel cross-entropy of (B, K, H, W) logits against (B, H, W) class ids."""
    labels = np.asarray(labels)
    if logits.ndim < 2 or labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise DimensionError(f"cross_entropy: labels {labels.shape} do not match logits {logits.shape}")
    k = logits.shape[1]
    bad = (labels != ignore_id) & ((labels < 0) | (labels >= k))
    if bad.any():
        raise RangeError(f"cross_entropy: label {int(labels[bad][0])} outside [0, {k})")
    return CrossEntropy.apply(logits, labels=labels, ignore_id=ignore_id)


def argmax(x: Tensor, axis: int) -> np.ndarray:
    """Index of the largest entry along `axis` (not differentiable)."""
    return np.argmax(x.data, axis=axis)
