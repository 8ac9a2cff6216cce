"""Deterministic random number handling.

Every stochastic routine in the package takes an integer seed and builds
its own PCG64 generator from it. Sub-tasks never share a generator;
instead they derive child seeds from the parent seed plus a string or
integer key, so reordering or skipping one sub-task cannot shift the
stream seen by another.
"""

import zlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _key_entropy(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(master, *keys):
    """Derive a child seed from ``master`` and a path of keys.

    Keys may be ints or strings (anything with a stable str()). The same
    (master, keys) pair always yields the same child seed; distinct key
    paths are spread apart by SeedSequence.
    """
    entropy = [int(master) & _MASK64] + [_key_entropy(k) for k in keys]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed):
    """Build a fresh PCG64 generator for the given integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))
