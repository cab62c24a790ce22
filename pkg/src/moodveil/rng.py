"""Named random substreams derived from a single root seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("data", "init", "shuffle", "dropout", "noise", "probe")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for ``name`` under ``seed``.

    The same (seed, name, extra) always yields the same stream, and streams
    with different names never share state, so one stage can be re-run
    without disturbing the draws of another.
    """
    if seed is None:
        raise ValueError("a root seed is required")
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(np.random.SeedSequence(key))


def child_seed(seed: int, name: str, *extra: int) -> int:
    """Derive an integer seed, for handing to code that takes a plain seed."""
    return int(substream(seed, name, *extra).integers(0, 2**31 - 1))
