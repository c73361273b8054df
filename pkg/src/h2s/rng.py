"""Seed derivation for per-group random streams.

Every per-group stream is seeded from ``mix_seed(master_seed, group_id)``
so results never depend on which worker ran a group or in what order.
The mixer is the SplitMix64 finalizer applied to
``master ^ (group_id + 1) * GOLDEN``:

    GOLDEN = 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all arithmetic modulo 2**64.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# Stream tags keep independent consumers of the same (seed, id) apart.
TAG_SIMULATE = 0x53494D
TAG_STAGE1 = 0x535431


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, group_id: int, tag: int = 0) -> int:
    """Derive a 64-bit seed for ``group_id`` from ``master_seed``."""
    if master_seed < 0 or master_seed > MASK64:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {master_seed}")
    z = master_seed ^ (((group_id + 1) * GOLDEN) & MASK64)
    if tag:
        z = splitmix64(z ^ splitmix64(tag))
    return splitmix64(z)


def group_rng(master_seed: int, group_id: int, tag: int = 0) -> np.random.Generator:
    return np.random.default_rng(mix_seed(master_seed, group_id, tag))
