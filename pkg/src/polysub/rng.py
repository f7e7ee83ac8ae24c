"""Seedable random streams and deterministic replica-seed derivation.

One generator algorithm is used everywhere: Philox 4x64, a counter-based
generator with a documented specification (Salmon et al.), as wrapped by
``numpy.random.Philox``.  A stream is identified by its 64-bit seed;
identical seeds give identical streams within this package.

Parallel code never shares a stream.  Each replica derives its own seed
from (master_seed, replica_index) with the SplitMix64 finalizer, so results
are reproducible regardless of how replicas are scheduled across threads.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream", "derive_replica_seed", "splitmix64"]

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood constants), 64-bit wrapping."""
    z &= 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * _MIX1) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * _MIX2) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def derive_replica_seed(master_seed: int, replica_index: int) -> int:
    """Derive the seed of replica ``replica_index`` from a 64-bit master seed.

    Bit-exact and scheduling-independent: the master seed is XOR'ed with
    ``replica_index * 0x9E3779B97F4A7C15`` (mod 2^64) and passed through the
    SplitMix64 finalizer.
    """
    if replica_index < 0:
        raise ValueError("replica_index must be non-negative")
    z = (master_seed & 0xFFFFFFFFFFFFFFFF) ^ ((replica_index * _GOLDEN) & 0xFFFFFFFFFFFFFFFF)
    return splitmix64(z)


def derive_replica_seeds(master_seed: int, n: int) -> np.ndarray:
    """Vectorized ``derive_replica_seed`` for indices 0..n-1 (uint64 array)."""
    idx = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)) ^ (idx * np.uint64(_GOLDEN))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z


class RngStream:
    """A single-owner random stream: Philox 4x64 keyed by a 64-bit seed.

    Not thread-safe by design; concurrent tasks must each own their stream,
    obtained with :meth:`spawn`.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.Philox(key=self.seed))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, algorithm={self.algorithm!r})"

    def spawn(self, index: int) -> "RngStream":
        """Independent child stream number ``index`` (SplitMix64 derivation)."""
        return RngStream(derive_replica_seed(self.seed, index))

    # Thin pass-throughs for the draw kinds the package uses.

    def random(self, size=None):
        return self.generator.random(size)

    def open_uniform(self, size=None):
        """Uniform draws strictly inside (0, 1).

        ``Generator.random`` can return exactly 0.0; such draws (and any 1.0
        that rounding might produce) are redrawn, which does not change the
        continuous law.
        """
        u = self.generator.random(size)
        if size is None:
            while u <= 0.0 or u >= 1.0:
                u = self.generator.random()
            return u
        bad = (u <= 0.0) | (u >= 1.0)
        while np.any(bad):
            u[bad] = self.generator.random(int(bad.sum()))
            bad = (u <= 0.0) | (u >= 1.0)
        return u

    def beta(self, a, b, size=None):
        return self.generator.beta(a, b, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def choice(self, a, size=None, p=None):
        return self.generator.choice(a, size=size, p=p)
