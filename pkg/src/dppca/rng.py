"""Seed handling.

All randomness flows through ``numpy.random.Generator(PCG64)`` built from a
``SeedSequence``.  Sub-streams are keyed by tuples such as
``(master_seed, chain_index)`` so parallel chains never share state and any
single stream can be rebuilt in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np

SeedLike = int | np.random.Generator | None


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed components must be nonnegative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(master: int, *keys) -> int:
    """64-bit seed determined by ``master`` and an arbitrary key path."""
    entropy = [_key_to_int(master)] + [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])


def make_rng(seed: SeedLike, *keys) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("stream keys require an integer master seed")
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
