"""Named, seedable random streams.

All randomness in the package flows from one integer root seed. Components
ask for a sub-stream by name (``stream(seed, "split")``), so each one can be
reproduced in isolation. Streams are PCG64 generators keyed through
``numpy.random.SeedSequence``, which gives identical draws on every platform.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key must be non-negative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed, *names):
    """Return a generator for the sub-stream ``names`` of root ``seed``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.default_rng(seq)


def derive_seed(seed, *names):
    """A 32-bit integer seed for the sub-stream ``names`` (for nested components)."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return int(seq.generate_state(1)[0])
