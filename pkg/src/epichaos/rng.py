"""Keyed counter-based random streams.

Every random draw in the package comes from a Philox stream whose key is
derived from ``(seed, *keys)``.  A stream for, say, the growth phase of step
``k`` is therefore independent of how many draws other phases consumed and
of the order in which replicas or samples are executed.
"""
from __future__ import annotations

import numpy as np

# stream tags
INIT = 0
GROWTH = 1
EPIDEMIC = 2
GRAPH = 3
SAMPLE = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for the counter-based stream ``(seed, *keys)``."""
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
