"""Deterministic seeding with labelled stream splitting.

All randomness in the toolkit flows from a single 64-bit seed. Independent
streams for distinct purposes (data generation, corruption, batch sampling,
initial points, ...) are derived by hashing short string labels into the
seed sequence, so two runs with the same seed agree bitwise regardless of
which streams they consume in between.
"""

from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Return a generator for the stream identified by ``(seed, *labels)``.

    Labels may be strings or integers; they are hashed (crc32) into extra
    entropy words, so distinct labels give statistically independent streams.
    """
    words = [zlib.crc32(str(lab).encode("utf-8")) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *words]))
