"""Seed discipline.

Every random draw in the package comes from a generator built here. A stream
is identified by a root seed, a replica index and a tag, so replica ``r`` can
be regenerated in isolation without replaying replicas ``0..r-1``.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def tag_id(tag: str) -> int:
    """Stable 32-bit integer for a stream tag."""
    return zlib.crc32(tag.encode("utf-8"))


def stream(root: int, replica: int = 0, tag: str = "main") -> np.random.Generator:
    """Independent generator for ``(root, replica, tag)``."""
    if replica < 0:
        raise ValueError("replica index must be nonnegative")
    ss = np.random.SeedSequence(int(root) & MASK64, spawn_key=(int(replica), tag_id(tag)))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(root: int, replica: int, tag: str) -> int:
    """A 64-bit seed derived from ``(root, replica, tag)`` for APIs that take int seeds."""
    ss = np.random.SeedSequence(int(root) & MASK64, spawn_key=(int(replica), tag_id(tag)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed), 0, "main")
