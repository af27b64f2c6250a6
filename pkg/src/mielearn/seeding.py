"""Deterministic derivation of independent random substreams.

Every stochastic stage (circuit draw, shot, training epoch, sweep cell)
gets its own generator derived from a master seed plus a tuple of tags, so
results are reproducible and independent of execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(*parts) -> int:
    """Hash a tuple of ints/floats/strings into a stable 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(f"{type(part).__name__}:{part!r};".encode())
    return int.from_bytes(h.digest(), "little")


def derive_rng(*parts) -> np.random.Generator:
    """Generator seeded from a hashed tag tuple; order-stable and collision-safe."""
    return np.random.default_rng(np.random.SeedSequence(child_seed(*parts)))
