"""Seed tree over numpy's counter-based Philox generator.

A child seed is a pure function of (master seed, replicate, role), so
replicas can run in any order or on any worker and still reproduce.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "init": 0,
    "events": 1,
    "aux_events": 2,
    "reference": 3,
    "surrogate": 4,
    "flow": 5,
    "bootstrap": 6,
    "misc": 7,
}


def child_seed(master: int, replicate: int = 0, role: str | int = "misc", *extra: int) -> int:
    """Child seed for (replicate, role), optionally keyed further by ``extra``."""
    code = ROLES[role] if isinstance(role, str) else int(role)
    key = (int(replicate), code) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def child_generator(master: int, replicate: int = 0, role: str | int = "misc",
                    *extra: int) -> np.random.Generator:
    return generator(child_seed(master, replicate, role, *extra))
