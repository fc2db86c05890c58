"""Counter-based random streams.

Every consumer of randomness asks for a generator keyed by ``(seed, *keys)``.
The key tuple is hashed into the seed sequence, so streams never depend on
call order or on how work is split across processes.
"""
import hashlib

import numpy as np


def stream_key(*keys):
    h = hashlib.blake2b(digest_size=16)
    for k in keys:
        h.update(repr(k).encode("utf-8"))
        h.update(b"\x1f")
    return [int.from_bytes(h.digest()[i:i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(seed, *keys):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *stream_key(*keys)]))


def derive_seed(seed, *keys):
    """A 31-bit integer seed for a sub-task, stable under any scheduling."""
    return int(derive_rng(seed, *keys).integers(2 ** 31))
