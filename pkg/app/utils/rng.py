"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by an integer tuple,
so a trial, a marginal payment run or a sampling step can be replayed on its
own without consuming draws from any other stream.
"""
from typing import Tuple, Union

import numpy as np

StreamKey = Tuple[int, ...]
SeedLike = Union[int, StreamKey]

# Stream purposes
THETA = 0
SAMPLE = 1
MARGINAL = 2
INGEST_CLUSTER = 10
INGEST_DATACENTER = 11
INGEST_PRICE = 12
INGEST_USERS = 13
INGEST_CAPACITY = 14
INSTANCE = 20
SYNTHETIC_TASKS = 21


def as_key(seed: SeedLike) -> StreamKey:
    """Normalize an int seed or a key tuple into a key tuple."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    key = tuple(int(part) for part in seed)
    if not key:
        raise ValueError("Stream key must not be empty")
    return key


def child_key(seed: SeedLike, *parts: int) -> StreamKey:
    return as_key(seed) + tuple(int(p) for p in parts)


def stream(seed: SeedLike, *purpose: int) -> np.random.Generator:
    """Return the generator for ``seed`` extended by ``purpose``."""
    key = child_key(seed, *purpose)
    sequence = np.random.SeedSequence(entropy=key[0], spawn_key=key[1:])
    return np.random.Generator(np.random.Philox(sequence))
