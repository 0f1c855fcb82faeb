"""Seeded, reproducible random streams."""

from __future__ import annotations

import json

import numpy as np


class RngStream:
    """A PCG64 stream keyed by ``(seed, stream_id)``.

    Equal keys give bit-identical draws on every platform; distinct
    ``stream_id`` values come from independent SeedSequence spawn keys.
    ``counter`` counts draw calls and is kept only for bookkeeping.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size, scale=1.0):
        self.counter += 1
        return self._gen.standard_normal(size) * scale

    def uniform(self, low, high, size):
        self.counter += 1
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        self.counter += 1
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        self.counter += 1
        return self._gen.random(size)

    def permutation(self, n):
        self.counter += 1
        return self._gen.permutation(n)

    def choice(self, n, p=None):
        self.counter += 1
        return int(self._gen.choice(n, p=p))

    def get_state(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "stream_id": self.stream_id,
                "counter": self.counter,
                "bit_generator": self._gen.bit_generator.state,
            }
        )

    @classmethod
    def from_state(cls, text: str) -> "RngStream":
        st = json.loads(text)
        out = cls(st["seed"], st["stream_id"])
        out.counter = st["counter"]
        out._gen.bit_generator.state = st["bit_generator"]
        return out
