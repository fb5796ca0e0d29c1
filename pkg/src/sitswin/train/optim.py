from __future__ import annotations

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from sitswin.errors import DimensionError, ParameterError
from sitswin.tensor.nn import Module, Parameter

VELOCITY_PREFIX = "velocity."


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total_steps)) / 2."""
    if total_steps < 1:
        raise ParameterError(f"cosine_lr: total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ParameterError(f"cosine_lr: step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def sgd_momentum_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    velocities: Sequence[np.ndarray],
    lr: float,
    momentum: float,
) -> Tuple[Sequence[np.ndarray], Sequence[np.ndarray]]:
    """In place: v <- momentum * v + g; w <- w - lr * v."""
    if not len(params) == len(grads) == len(velocities):
        raise DimensionError(f"sgd_momentum_step: {len(params)} params, {len(grads)} grads, {len(velocities)} velocities")
    for w, g, v in zip(params, grads, velocities):
        if not w.shape == g.shape == v.shape:
            raise DimensionError(f"sgd_momentum_step: shapes {w.shape}, {g.shape}, {v.shape} disagree")
        v *= v.dtype.type(momentum)
        v += g
        w -= w.dtype.type(lr) * v
    return params, velocities


class SGD:
    """Momentum SGD over the named parameters of a module, one velocity per parameter."""

    def __init__(self, model: Module, momentum: float = 0.9) -> None:
        self.momentum = momentum
        self.named: List[Tuple[str, Parameter]] = list(model.named_parameters())
        self.velocities: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.named}

    def step(self, lr: float) -> None:
        params = [p.data for _, p in self.named]
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for _, p in self.named]
        sgd_momentum_step(params, grads, [self.velocities[name] for name, _ in self.named], lr, self.momentum)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {VELOCITY_PREFIX + name: v.copy() for name, v in self.velocities.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, p in self.named:
            key = VELOCITY_PREFIX + name
            if key not in state:
                raise DimensionError(f"SGD.load_state_dict: missing velocity for '{name}'")
            value = np.asarray(state[key])
            if value.shape != p.shape:
                raise DimensionError(f"SGD.load_state_dict: velocity '{name}' has shape {value.shape}, parameter {p.shape}")
            self.velocities[name] = value.astype(p.dtype, copy=True)
