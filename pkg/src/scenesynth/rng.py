"""Seeded random number generation.

Every stochastic routine in the package draws from a Philox-4x64 counter-based
generator constructed explicitly from a caller-supplied seed. Philox is a fixed
published algorithm (constants documented in the numpy reference and in Salmon
et al., "Parallel random numbers: as easy as 1, 2, 3"), so identical seeds give
identical streams on every platform; the platform-default generator is never
used anywhere.

Sub-streams are derived with `substream(seed, *key)` so that independent
purposes (scene geometry, noise injection, weight init, ...) never share a
stream even when they share a user-facing seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["generator", "substream", "derive_seed"]


def generator(seed: int) -> np.random.Generator:
    """Philox generator for a bare integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for (seed, key...); distinct keys give independent streams."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key...) to a single int seed for APIs that take one."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0])
