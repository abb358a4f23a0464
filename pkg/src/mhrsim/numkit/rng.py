"""Replayable random streams keyed by (master seed, scenario, replicate).

Each stream is a Philox counter-based generator whose key comes from
numpy's SeedSequence hash of the triple, so replicates can be generated in
any order or in parallel without shared state.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    def __init__(self, master_seed: int, scenario_id: int = 0, replicate_id: int = 0):
        self.master_seed = int(master_seed)
        self.scenario_id = int(scenario_id)
        self.replicate_id = int(replicate_id)
        ss = np.random.SeedSequence(
            entropy=self.master_seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(self.scenario_id, self.replicate_id),
        )
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return (
            f"RngStream(master_seed={self.master_seed}, "
            f"scenario_id={self.scenario_id}, replicate_id={self.replicate_id})"
        )

    def uniform(self, size=None) -> np.ndarray:
        # open interval: log(u) must stay finite
        u = self.generator.random(size)
        while np.any(u == 0.0):
            u = np.where(u == 0.0, self.generator.random(np.shape(u)), u)
        return u

    def bernoulli(self, p, size=None) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        shape = p.shape if size is None else size
        return (self.generator.random(shape) < p).astype(np.int8)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)


def rng_stream(master_seed: int, scenario_id: int = 0, replicate_id: int = 0) -> RngStream:
    return RngStream(master_seed, scenario_id, replicate_id)
