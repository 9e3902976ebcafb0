"""Counter-based random streams.

Every replica draws from its own Philox generator keyed by
``(seed, stream_id, *path)`` through :class:`numpy.random.SeedSequence`'s
spawn keys, so a stream is a pure function of its key: no shared state, no
dependence on the order in which replicas are scheduled.
"""
from __future__ import annotations

import numpy as np

SEED_BITS = 64


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed:
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**SEED_BITS:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, stream_id: int, *path: int) -> np.random.Generator:
    """Philox generator for the stream addressed by ``(seed, stream_id, *path)``."""
    key = (int(stream_id),) + tuple(int(p) for p in path)
    if any(k < 0 for k in key):
        raise ValueError("stream ids must be nonnegative")
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
