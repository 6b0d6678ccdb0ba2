"""Stable seeding helpers (Python's ``hash`` is salted per process, so never use it here)."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*parts: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int, *keys: object) -> np.random.Generator:
    """Generator determined by ``seed`` and a namespace of keys."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, stable_hash(*keys)])
