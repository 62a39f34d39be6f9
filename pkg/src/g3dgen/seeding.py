"""Named random substreams expanded from a single 64-bit seed."""
import zlib

import numpy as np


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a non-negative 64-bit integer")
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *map(int, index)])
    )
