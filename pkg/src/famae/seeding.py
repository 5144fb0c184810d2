"""Deterministic random streams.

Every source of randomness in the package (parameter init, mask draws, data
synthesis, shuffling) is a named substream of one 64-bit seed, so a run is
reproducible from its seed alone and substreams never interfere with each
other. Streams are numpy ``Generator(PCG64)`` instances: the same seed yields
the same draw sequence on every platform.
"""

from __future__ import annotations

import zlib

import numpy as np
import torch

__all__ = ["Streams", "substream", "seed_torch"]


def _key_words(parts) -> list[int]:
    words = []
    for part in parts:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        elif isinstance(part, (int, np.integer)):
            words.append(int(part) & 0xFFFFFFFF)
            words.append((int(part) >> 32) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream key parts must be str or int, got {type(part)!r}")
    return words


def substream(seed: int, *parts) -> np.random.Generator:
    """Generator for the substream named by ``parts`` under ``seed``.

    The same (seed, parts) always yields the same stream; distinct names
    yield statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + _key_words(parts)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


class Streams:
    """Named substreams of one top-level seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def get(self, *parts) -> np.random.Generator:
        return substream(self.seed, *parts)

    def spawn_key(self, *parts) -> "Streams":
        # Fold extra key parts into a child seed; used for per-run scoping.
        child = np.random.SeedSequence([self.seed] + _key_words(parts))
        return Streams(int(child.generate_state(1, np.uint64)[0]))


def seed_torch(seed: int, *parts) -> None:
    """Seed torch's global RNG (dropout draws) from a named substream."""
    gen = substream(seed, "torch", *parts)
    torch.manual_seed(int(gen.integers(0, 2**63 - 1)))
