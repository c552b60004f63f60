"""Counter-based random streams: trial ``i`` of seed ``s`` always sees the same draws.

Each trial owns one Philox4x64 block (four 64-bit words) addressed by its
index, so any sharding of a run reproduces the single-process stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

SLOTS_PER_TRIAL = 4
SEED_MAX = 2**64 - 1
_TO_UNIT = 2.0**-53


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def trial_uniforms(seed: int, start: int, n: int) -> np.ndarray:
    """Uniforms in [0, 1) of shape ``(n, SLOTS_PER_TRIAL)`` for trials ``start..start+n-1``."""
    if start < 0 or n < 0:
        raise ValueError("trial range must be non-negative")
    bitgen = Philox(key=check_seed(seed), counter=start)
    raw = bitgen.random_raw(n * SLOTS_PER_TRIAL).reshape(n, SLOTS_PER_TRIAL)
    return (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT


@dataclass(frozen=True)
class RngState:
    """Position in a seeded stream: the substream of one trial."""

    seed: int
    trial: int = 0

    def __post_init__(self):
        check_seed(self.seed)
        if self.trial < 0:
            raise ValueError("trial index must be non-negative")

    def uniforms(self) -> np.ndarray:
        return trial_uniforms(self.seed, self.trial, 1)[0]

    def next(self) -> RngState:
        return RngState(self.seed, self.trial + 1)
