"""Splittable, counter-based random streams.

A :class:`StreamKey` is a root seed plus a path of ``(label, index)`` pairs.
The path is hashed (BLAKE2b) into a 128-bit Philox key, so a stream depends
only on its key and never on how many other streams were drawn before it.
Computations keyed per restart / trial / sample therefore give identical
results under any execution order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StreamKey:
    root: int
    path: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "root", int(self.root) & _MASK64)

    def derive(self, label: str, index: int = 0) -> "StreamKey":
        return StreamKey(self.root, self.path + ((str(label), int(index)),))

    def philox_key(self) -> np.ndarray:
        h = hashlib.blake2b(digest_size=16)
        h.update(self.root.to_bytes(8, "little"))
        for label, index in self.path:
            encoded = label.encode()
            h.update(len(encoded).to_bytes(4, "little"))
            h.update(encoded)
            h.update(int(index).to_bytes(8, "little", signed=True))
        digest = h.digest()
        return np.frombuffer(digest, dtype=np.uint64).copy()

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at counter 0 of this stream."""
        return np.random.Generator(np.random.Philox(key=self.philox_key()))


def derive(key: StreamKey, label: str, index: int = 0) -> StreamKey:
    return key.derive(label, index)


def as_key(seed) -> StreamKey:
    if isinstance(seed, StreamKey):
        return seed
    return StreamKey(int(seed))


def uniform(key: StreamKey, size=None, low=0.0, high=1.0):
    return key.generator().uniform(low, high, size)


def gaussian(key: StreamKey, size=None):
    return key.generator().standard_normal(size)


def signs(key: StreamKey, size=None):
    """Rademacher (+1/-1 with probability 1/2) draws as float64."""
    bits = key.generator().integers(0, 2, size=size)
    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0
