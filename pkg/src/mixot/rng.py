"""Counter-based seed derivation.

Every stream is a pure function of ``(master, *key)``, so adding replicates
or rungs never shifts the streams already in use.
"""

import zlib

import numpy as np


def derive_seed(master, *key):
    """Return a 63-bit integer seed for the stream identified by ``key``.

    Key entries may be ints or strings; strings are hashed with CRC32.
    """
    words = []
    for item in key:
        if isinstance(item, str):
            words.append(zlib.crc32(item.encode("utf-8")))
        else:
            words.append(int(item))
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(words))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 31) ^ int(lo)


def stream(master, *key):
    """A fresh ``numpy.random.Generator`` for ``(master, *key)``."""
    return np.random.default_rng(derive_seed(master, *key))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
