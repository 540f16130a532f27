import zlib

import numpy as np


def substream(seed, name):
    """Independent generator for a named stream derived from one top-level seed."""
    key = tuple(zlib.crc32(part.encode()) for part in str(name).split("/"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
