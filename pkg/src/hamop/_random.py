"""Seeded generator helpers.

All randomness flows through :class:`numpy.random.Generator` backed by PCG64.
Child streams for per-sample work are derived with :class:`numpy.random.SeedSequence`
using ``spawn_key=(index,)``, so sample ``i`` of a dataset is the same no matter how
many samples are drawn or in which order they are produced.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed):
    """Return a PCG64 generator; passes an existing ``Generator`` through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def child_rng(root_seed, *index):
    """Independent generator for the sample addressed by ``index`` under ``root_seed``."""
    ss = np.random.SeedSequence(root_seed, spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))
