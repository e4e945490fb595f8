"""Seeded random streams built on the Philox-4x64 counter-based generator.

Philox (Salmon et al., 2011) is a keyed bijection applied to a 256-bit
counter, so a stream is fully determined by its key and the numpy bit
generator produces identical output on every platform.  Child streams are
derived from ``(seed, *keys)`` through ``SeedSequence`` rather than by
advancing a shared stream, which makes per-sample and per-step randomness
independent of evaluation order.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64-10"


class Rng:
    def __init__(self, seed: int, *keys: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence([self.seed, *self.keys])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, *keys: int) -> "Rng":
        """Independent child stream identified by ``keys``."""
        return Rng(self.seed, *self.keys, *keys)

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, keys={self.keys})"
