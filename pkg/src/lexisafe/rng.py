"""Named, reproducible random streams.

Every stochastic component draws from its own stream derived from a root seed
plus a tuple of tags (strings or ints). Streams are independent and stable
across runs and platforms, which is what makes whole runs bit-reproducible.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    h = _FNV_OFFSET
    for b in str(tag).encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def stream(seed: int, *tags) -> np.random.Generator:
    """Return a Generator keyed by (seed, *tags)."""
    entropy = [int(seed) & _MASK64] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
