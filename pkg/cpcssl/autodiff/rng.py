"""Counter-based random streams.

A stream is identified by ``(seed, counter)``. It is realised with numpy's
Philox-4x64 generator: the 128-bit key is ``seed`` and the 256-bit Philox
counter starts at ``[0, 0, counter, 0]``. Philox advances its lowest word per
block, so distinct ``counter`` values never overlap and the same pair yields the
same stream on every platform.
"""
import hashlib
from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngState:
    seed: int
    counter: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _U64 and 0 <= self.counter <= _U64):
            raise ValueError(f"seed and counter must be unsigned 64-bit, got {self.seed}, {self.counter}")

    def generator(self) -> np.random.Generator:
        counter = np.array([0, 0, self.counter, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self.seed, counter=counter))

    def advance(self, steps: int = 1) -> "RngState":
        return RngState(self.seed, (self.counter + steps) & _U64)

    def at(self, counter: int) -> "RngState":
        return RngState(self.seed, counter & _U64)

    def child(self, label: str) -> "RngState":
        """Independent stream for a named subsystem (data shuffle, noise, gumbel...)."""
        digest = hashlib.blake2b(f"{self.seed}:{self.counter}:{label}".encode(), digest_size=8).digest()
        return RngState(int.from_bytes(digest, "little"), 0)

    def normal(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self.generator().random(shape)
