"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, blake2b(path))`` where
``path`` is a tuple of names/integers, e.g. ``("batch", 17, "anchor")``.
Streams with different paths never overlap, so experiments running side by
side cannot share random numbers, and any stream can be recreated without
replaying the ones before it.
"""
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(seed, *path):
    h = hashlib.blake2b(digest_size=8)
    for part in path:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return np.array([int(seed) & _MASK64, int.from_bytes(h.digest(), "little")], dtype=np.uint64)


def substream(seed, *path):
    """Return a ``numpy.random.Generator`` for ``(seed, path)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))


def derive_seed(seed, *path):
    """A 63-bit integer seed for handing to a sub-component."""
    return int(substream(seed, "derive", *path).integers(0, 2**63 - 1))
