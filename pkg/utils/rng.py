"""
Hierarchical random streams.

Every draw in a run descends from one 64-bit seed. A stream is addressed by
integer keys (step index, attempt index, ...) which become the spawn key of a
``numpy.random.SeedSequence``; the bits feed a Philox counter-based generator.
Two streams with different keys are independent and the same keys always
reproduce the same draws, whichever worker process computes them.
"""
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class RngStream(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, lt=2**64, description="Run seed.")
    keys: tuple[int, ...] = Field(default=(), description="Hierarchical stream identifiers.")

    def child(self, *keys: int) -> "RngStream":
        return RngStream(seed=self.seed, keys=self.keys + tuple(int(k) for k in keys))

    @cached_property
    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.keys)
        return np.random.Generator(np.random.Philox(sequence))


def root_stream(seed: int) -> RngStream:
    return RngStream(seed=seed)

