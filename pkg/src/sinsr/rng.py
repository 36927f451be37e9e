"""Splittable random streams derived from a single master seed.

Every source of randomness in the package draws from a counter-based
Philox generator keyed by ``(master_seed, purpose_id << 48 | index)``.
Streams for different purposes (or different per-example indices) are
statistically independent, and adding a new consumer never perturbs the
draws seen by existing ones.
"""

from __future__ import annotations

import numpy as np

# Purpose ids. Append only; renumbering breaks reproducibility of
# existing configs.
DATA_HR = 1
DATA_DEGRADE = 2
MODEL_INIT = 3
TEACHER_TRAIN = 4
DISTILL = 5
EVAL = 6
VERIFY = 7
TIMING = 8

_INDEX_BITS = 48
_INDEX_MASK = (1 << _INDEX_BITS) - 1


def stream(master_seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Return the generator for (master_seed, purpose, index).

    The same triple always yields the same stream, on any platform.
    """
    if not 0 <= purpose < (1 << 16):
        raise ValueError(f"purpose id {purpose} out of range")
    if not 0 <= index <= _INDEX_MASK:
        raise ValueError(f"stream index {index} out of range")
    key = np.array(
        [np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
         np.uint64((purpose << _INDEX_BITS) | index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def normal_f32(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard-normal draw as float32 (drawn in float64, then cast)."""
    return gen.standard_normal(shape).astype(np.float32)
