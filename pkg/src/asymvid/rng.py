"""Counter-based random streams.

``Rng(seed, stream)`` keys a Philox-4x64 generator with the pair
``(seed, stream)``; the generator's 256-bit counter advances with every draw.
Independent consumers (data, masks, noise, dropout) take disjoint streams, so
reordering one consumer never perturbs another.  Output is bit-identical
across platforms for a fixed call sequence.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream ids for the different consumers
STREAM_INIT = 1
STREAM_DATA = 2
STREAM_TRAIN = 3
STREAM_SAMPLE = 4
STREAM_EVAL = 5


class Rng:
    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        self._gen = np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))

    def child(self, *path: int) -> "Rng":
        """Derive an independent stream from this one's key and an integer path."""
        mixed = np.random.SeedSequence([self.seed, self.stream, *map(int, path)]).generate_state(1, np.uint64)[0]
        return Rng(self.seed, int(mixed))

    # draws ---------------------------------------------------------------
    def normal(self, shape, dtype=np.float32) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float64).astype(dtype)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), uniformly without replacement."""
        return np.sort(self._gen.choice(n, size=k, replace=False))

    def bernoulli(self, p: float, shape) -> np.ndarray:
        return self._gen.random(size=shape) < p

    # state ---------------------------------------------------------------
    def get_state(self) -> dict:
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "stream": self.stream,
            "counter": [int(c) for c in st["state"]["counter"]],
            "buffer": [int(c) for c in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        rng = cls(state["seed"], state["stream"])
        bg = rng._gen.bit_generator
        st = bg.state
        st["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        st["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        st["buffer_pos"] = state["buffer_pos"]
        st["has_uint32"] = state["has_uint32"]
        st["uinteger"] = state["uinteger"]
        bg.state = st
        return rng
