"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from sitswin.tensor import ops
from sitswin.tensor.core import Tensor, no_grad


@dataclass
class GradcheckResult:
    """Worst relative error per checked input."""

    errors: List[float] = field(default_factory=list)
    rtol: float = 1e-5

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.rtol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-9) -> float:
    """max |a - n| / (|a| + 1e-8), ignoring elements whose absolute difference is below atol."""
    diff = np.abs(analytic - numeric)
    rel = diff / (np.abs(analytic) + 1e-8)
    rel = np.where(diff < atol, 0.0, rel)
    return float(rel.max()) if rel.size else 0.0


def numerical_gradient(
    evaluate: Callable[[], float],
    array: np.ndarray,
    eps: float = 1e-5,
    positions: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """d evaluate / d array by central differences, perturbing `array` in place."""
    if not array.flags.c_contiguous:
        raise ValueError("numerical_gradient: array must be C-contiguous to be perturbed in place")
    flat = array.reshape(-1)
    positions = range(flat.size) if positions is None else positions
    grad = np.zeros(flat.size, dtype=np.float64)
    for i in positions:
        original = flat[i]
        flat[i] = original + eps
        plus = evaluate()
        flat[i] = original - eps
        minus = evaluate()
        flat[i] = original
        grad[i] = (plus - minus) / (2.0 * eps)
    return grad.reshape(array.shape)


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    rtol: float = 1e-5,
    atol: float = 1e-9,
    seed: int = 0,
) -> GradcheckResult:
    """
    Compare backward against central differences for every input that requires grad.

    Non-scalar outputs are reduced with a fixed random projection so every
    output element contributes to the checked scalar.
    """
    with no_grad():
        out_shape = fn(*inputs).shape
    projection = np.random.default_rng(seed).standard_normal(out_shape).astype(inputs[0].dtype)

    def scalar() -> Tensor:
        return ops.sum(ops.mul(fn(*inputs), Tensor(projection)))

    def evaluate() -> float:
        with no_grad():
            return scalar().item()

    for t in inputs:
        t.zero_grad()
    scalar().backward()

    result = GradcheckResult(rtol=rtol)
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64)
        numeric = numerical_gradient(evaluate, t.data, eps)
        result.errors.append(relative_error(analytic, numeric, atol))
    return result
