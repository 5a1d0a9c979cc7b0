"""Counter-based random streams.

Every particle owns an independent Philox stream whose 128-bit key is built
from ``(seed, stream index)``; the draw consumed by particle ``i`` at step
``s`` is the ``s``-th standard normal of its stream, so trajectories do not
depend on how steps are chunked and permuting stream indices permutes the
noise exactly.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

NOISE = 0
INITIAL = 1


def stream(seed: int, index: int, purpose: int = NOISE) -> np.random.Generator:
    key = (int(seed) & _MASK64) | ((int(index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, purpose]))


class NoiseSource:
    """Blocks of per-particle standard normals, one stream per particle."""

    def __init__(self, seed: int, stream_ids):
        self._gens = [stream(seed, i, NOISE) for i in stream_ids]

    @property
    def n(self) -> int:
        return len(self._gens)

    def block(self, steps: int) -> np.ndarray:
        """``(steps, n)`` array; row ``s`` holds the draws for the next step ``s``."""
        out = np.empty((self.n, steps))
        for j, g in enumerate(self._gens):
            g.standard_normal(out=out[j])
        return out.T


def initial_uniforms(seed: int, stream_ids) -> np.ndarray:
    """Two uniforms per particle, from streams disjoint from the noise streams."""
    return np.array([stream(seed, i, INITIAL).random(2) for i in stream_ids]).reshape(-1, 2)
