"""Seed derivation for reproducible, non-overlapping random streams.

Every stream is a PCG64 generator seeded from ``(master seed, tag, index...)``.
Tags are hashed with BLAKE2b so the mapping is stable across Python processes
(the builtin ``hash`` is salted per process).
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_words(tag):
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed, tag, *indices):
    """Return a 64-bit integer seed for the sub-stream ``(seed, tag, indices)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(_tag_words(tag), *(int(i) & _MASK64 for i in indices)),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed, tag, *indices):
    """Independent ``numpy.random.Generator`` for ``(seed, tag, indices)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(_tag_words(tag), *(int(i) & _MASK64 for i in indices)),
    )
    return np.random.Generator(np.random.PCG64(ss))
