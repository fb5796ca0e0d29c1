"""
SplitMix64 generator.

Every random decision of the data pipeline and the training loop (shuffles,
flips, synthetic fields, noise) comes from this generator so that sequences
are reproducible from the update constants alone.
"""

from __future__ import annotations

import math
from typing import List, MutableSequence, TypeVar

import numpy as np

from sitswin.errors import ParameterError

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """64-bit state advanced by GAMMA per draw; outputs are the mixed state."""

    def __init__(self, seed: int) -> None:
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def next_below(self, n: int) -> int:
        """Integer in [0, n) by reduction modulo n."""
        if n < 1:
            raise ParameterError(f"SplitMix64.next_below: bound must be >= 1, got {n}")
        return self.next_u64() % n

    def shuffle(self, items: MutableSequence[T]) -> MutableSequence[T]:
        """Fisher-Yates in place, from the last position down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def permutation(self, n: int) -> List[int]:
        return list(self.shuffle(list(range(n))))

    # ---- Bulk draws (same stream as the scalar calls) ----

    def u64_array(self, count: int) -> np.ndarray:
        """The next `count` outputs as uint64, advancing the state by `count` draws."""
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GAMMA) & MASK64
        return z

    def float_array(self, count: int) -> np.ndarray:
        return (self.u64_array(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal_array(self, count: int) -> np.ndarray:
        """Standard normals by Box-Muller, two per pair of uniforms."""
        pairs = math.ceil(count / 2)
        u = self.float_array(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * math.pi * u[:, 1]
        return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).reshape(-1)[:count]
