"""Deterministic random-stream derivation.

Every random decision in a run flows from one root seed through named
substreams, so results never depend on execution order or worker count.
A substream is addressed by a path of labels and indices, e.g.
``("grad", round_idx, client_id, step)``; the same path always yields the
same stream.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["SeedTree", "substream"]


def _word(part: int | str) -> int:
    if isinstance(part, bool):
        raise TypeError("bool is not a valid substream key")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream index must be non-negative, got {part}")
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        # crc32 is stable across platforms and Python versions
        return zlib.crc32(part.encode("utf-8")) & 0xFFFFFFFF
    raise TypeError(f"substream key must be int or str, got {type(part).__name__}")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator for `path` under the given root seed."""
    key = tuple(_word(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class SeedTree:
    """Root seed plus keyed access to named substreams.

    Passing a SeedTree instead of a bare generator lets independent
    components (clients, rounds, per-parameter evaluations) pull their own
    streams without sharing mutable state.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, *path: int | str) -> np.random.Generator:
        return substream(self.seed, *path)

    def __repr__(self) -> str:
        return f"SeedTree(seed={self.seed})"
