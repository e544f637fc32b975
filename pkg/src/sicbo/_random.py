"""Seeded Philox streams keyed by integer tuples.

A stream is a pure function of ``(seed, *key)``; the noise for particle ``i``
is the Philox stream keyed ``(seed, NOISE, i)`` read sequentially, so the
normal vector used at step ``k`` depends only on ``(seed, i, k)``.
"""

from __future__ import annotations

import numpy as np

NOISE = 0
INIT = 1
REPLICA = 2

_MASK64 = (1 << 64) - 1


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class NoiseStream:
    """Standard normal ``(n_particles, dim)`` draws, one block per time step.

    Draws are buffered ``chunk`` steps at a time; the buffering does not change
    the values (each per-particle generator is read strictly in order).
    """

    def __init__(self, seed: int, n_particles: int, dim: int, chunk: int = 4096,
                 particle_ids=None):
        ids = range(n_particles) if particle_ids is None else particle_ids
        self._gens = [stream(seed, NOISE, i) for i in ids]
        if len(self._gens) != n_particles:
            raise ValueError("particle_ids must have n_particles entries")
        self.dim = dim
        self.chunk = int(chunk)
        self._buf = np.empty((0, n_particles, dim))
        self._pos = 0

    def _refill(self):
        blocks = [g.standard_normal((self.chunk, self.dim)) for g in self._gens]
        self._buf = np.stack(blocks, axis=1)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= len(self._buf):
            self._refill()
        z = self._buf[self._pos]
        self._pos += 1
        return z
