"""Counter-based seeded hashing.

Everything random in the synthetic prediction oracle and the mitigation
detector is a pure function of integer coordinates (seed, sample, shard,
version, ...). A splitmix64-style avalanche chain gives uniform 64-bit
outputs that are reproducible across runs, independent of call order, and
cheap enough for the simulator hot path. A vectorized variant covers the
per-shard prediction case.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INIT = 0x8BADF00DDEADBEEF

TWO64 = float(2**64)


def mix64_chain(h: int, *parts: int) -> int:
    """Fold further integers into an existing hash chain.

    ``mix64(a, b, c) == mix64_chain(mix64(a, b), c)``, so a shared prefix
    (seed, salt, sample) can be folded once and extended per shard.
    """
    for p in parts:
        h = (h + _GAMMA + (p & _MASK)) & _MASK
        h ^= h >> 30
        h = (h * _MUL1) & _MASK
        h ^= h >> 27
        h = (h * _MUL2) & _MASK
        h ^= h >> 31
    return h


def mix64(*parts: int) -> int:
    """Hash a tuple of non-negative integers to a uniform 64-bit value."""
    return mix64_chain(_INIT, *parts)


def mix64_array(*parts) -> np.ndarray:
    """Vectorized :func:`mix64`.

    Each part is a scalar int or an integer ndarray; arrays broadcast
    against each other. Returns a uint64 ndarray, elementwise identical to
    calling ``mix64`` on the scalar tuples.
    """
    arrs = [np.asarray(p, dtype=np.uint64) for p in parts]
    shape = np.broadcast_shapes(*(a.shape for a in arrs))
    h = np.full(shape, _INIT, dtype=np.uint64)
    gamma = np.uint64(_GAMMA)
    m1 = np.uint64(_MUL1)
    m2 = np.uint64(_MUL2)
    s30, s27, s31 = np.uint64(30), np.uint64(27), np.uint64(31)
    for a in arrs:
        h = h + gamma + a
        h ^= h >> s30
        h *= m1
        h ^= h >> s27
        h *= m2
        h ^= h >> s31
    return h


def unit_float(h: int) -> float:
    """Map a 64-bit hash to [0, 1)."""
    return h / TWO64
