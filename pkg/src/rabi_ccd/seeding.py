"""Deterministic seed derivation.

Trajectory ``k`` of an ensemble owns the child seed derived from
``SeedSequence(master_seed, spawn_key=(k,))``, so its noise does not depend on
how many trajectories run or on which worker executes it.
"""
from __future__ import annotations

import numpy as np


def child_seed(master_seed: int, k: int) -> int:
    """64-bit reproducibility token for trajectory ``k``."""
    words = np.random.SeedSequence(int(master_seed), spawn_key=(int(k),)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def trajectory_seeds(master_seed: int, n: int) -> list[int]:
    if n < 0:
        raise ValueError("n must be >= 0")
    return [child_seed(master_seed, k) for k in range(n)]


def channel_rng(traj_seed: int, channel: int) -> np.random.Generator:
    """Independent stream for noise channel ``channel`` of one trajectory."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(traj_seed), spawn_key=(int(channel),))))
