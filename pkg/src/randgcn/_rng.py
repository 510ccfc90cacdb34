"""Seed streams keyed by (master seed, purpose tag, indices)."""

import zlib

import numpy as np


def stream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent generator for one sampled object.

    Streams with different tags or indices are statistically independent,
    and adding new keys never shifts existing ones.
    """
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    return int(np.sign(x) * np.floor(abs(x) + 0.5))
