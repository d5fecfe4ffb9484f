"""Seedable, splittable random source.

Wraps numpy's PCG64 generator. `split(label)` derives an independent
child stream whose seed is the first 8 bytes of SHA-256("<seed>:<label>"),
so any component can obtain its own reproducible stream from a single
experiment seed without consuming state from the parent.
"""
from __future__ import annotations

import hashlib

import numpy as np


class RandomSource:
    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def split(self, label: str) -> "RandomSource":
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        return RandomSource(int.from_bytes(digest[:8], "little"))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size=size)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        return self._gen.normal(loc, scale, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, seq, size=None, replace: bool = True):
        return self._gen.choice(seq, size=size, replace=replace)

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def shuffle(self, items: list) -> None:
        self._gen.shuffle(items)

    def dirichlet(self, alpha):
        return self._gen.dirichlet(alpha)
