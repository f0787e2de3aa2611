"""Counter-keyed random streams.

Every episode gets its own Philox generator keyed by
``(seed, purpose, trial, episode)`` through ``numpy.random.SeedSequence``.
Within an episode the draws are consumed in step order: one uniform to pick a
mixture component, then ``(H, 2)`` uniforms (action, transition) per step.
Because nothing is shared between episodes, results do not depend on the
order in which episodes or trials are executed.
"""

from __future__ import annotations

import zlib

import numpy as np


def purpose_code(purpose: str | int) -> int:
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    return zlib.crc32(purpose.encode("utf-8"))


def episode_generator(seed: int, purpose: str | int, trial: int, episode: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_code(purpose), int(trial), int(episode)))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 32-bit child seed, e.g. one per trial."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


class EpisodeStream:
    """Draws for a block of episodes under one ``(seed, purpose, trial)`` key."""

    def __init__(self, seed: int, purpose: str | int, trial: int = 0):
        self.seed = int(seed)
        self.purpose = purpose_code(purpose)
        self.trial = int(trial)

    def draws(self, episode: int, horizon: int) -> tuple[float, np.ndarray]:
        g = episode_generator(self.seed, self.purpose, self.trial, episode)
        pick = g.random()
        return pick, g.random((horizon, 2))

    def block(self, start: int, count: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        picks = np.empty(count)
        u = np.empty((count, horizon, 2))
        for i in range(count):
            picks[i], u[i] = self.draws(start + i, horizon)
        return picks, u
