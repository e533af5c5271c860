"""Counter-based random streams.

Every stream is a Philox generator keyed by (master seed, module id, stream
id), so results never depend on how work is split across threads.
"""
from __future__ import annotations

import zlib

import numpy as np


def module_id(name: str) -> int:
    return zlib.crc32(name.encode())


def stream(seed: int, module: str, *stream_id: int) -> np.random.Generator:
    """Generator for (seed, module, stream_id...); extra ids name sub-streams."""
    ids = [int(s) for s in stream_id] or [0]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, module_id(module), *ids])
    return np.random.Generator(np.random.Philox(ss))
