"""Deterministic RNG substreams.

Every randomized stage derives its generator from a 64-bit hash of the master
seed plus a label path (e.g. split name and sample index).  Substreams are
therefore independent of worker count and scheduling order, and a (seed,
split, index) triple always reproduces the same draw sequence.
"""

import hashlib

import numpy as np


def substream_seed(*parts) -> int:
    """Hash arbitrary labels down to a 64-bit seed."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def substream(*parts) -> np.random.Generator:
    """Counter-based generator for the given label path."""
    return np.random.Generator(np.random.Philox(substream_seed(*parts)))
