"""Weight initialisers. All draw from an explicit numpy Generator."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.stats import truncnorm

from sitswin.tensor.core import get_default_dtype


def trunc_normal(shape: Sequence[int], rng: np.random.Generator, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +/- 2 std."""
    values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=tuple(shape), random_state=rng)
    return np.asarray(values, dtype=get_default_dtype())


def he_normal(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Normal(0, sqrt(2 / fan_in)) for convolution kernels laid out (out, in, *kernel)."""
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(tuple(shape)) * math.sqrt(2.0 / fan_in)).astype(get_default_dtype())


def zeros(shape: Sequence[int]) -> np.ndarray:
    return np.zeros(tuple(shape), dtype=get_default_dtype())


def ones(shape: Sequence[int]) -> np.ndarray:
    return np.ones(tuple(shape), dtype=get_default_dtype())
