"""Seed derivation.  Every derived seed is a pure function of its inputs."""

import numpy as np


def derive_seed(master_seed, *indices):
    """64-bit seed for the cell ``indices`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
