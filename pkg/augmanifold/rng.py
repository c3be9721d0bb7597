"""
Named, order-independent random streams.

All randomness goes through ``stream(seed, *path)``: a Philox (counter-based)
generator keyed by the master seed and a path of stream labels. Two calls with
the same seed and path produce the same numbers regardless of what else was
drawn before, which keeps parallel or reordered generation reproducible.

Stream labels may be strings or non-negative integers. Strings are hashed with
a fixed CRC so the key is stable across interpreters (``hash()`` is salted).
"""

import zlib

import numpy as np


def _label_key(label: str | int) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    if label < 0:
        raise ValueError(f"stream labels must be non-negative, got {label}")
    return int(label)


def stream(seed: int, *path: str | int) -> np.random.Generator:
    """Return the generator for stream ``path`` under master ``seed``."""
    sequence = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(_label_key(p) for p in path))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *path: str | int) -> int:
    """Derive a 63-bit child seed, e.g. one per experiment repeat."""
    return int(stream(seed, "derive", *path).integers(0, 2**63 - 1))
