"""Counter-based splitting of one master seed into independent streams."""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV = "NETGROW_SEED"


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(master: int, *keys) -> np.random.Generator:
    """Generator for ``(master, *keys)``; equal keys always give equal streams.

    String keys name a purpose (``"restart"``, ``"shuffle"``) and integer keys
    count (graph index, epoch), so streams never depend on generation order.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)


def default_seed(fallback: int = 0) -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else fallback
