"""Deterministic seed derivation for named sub-streams.

All randomness in a run flows from one master seed. Sub-streams are derived
by hashing the master seed together with a path of names/integers, so
modules stay reproducible independently of call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *path) -> int:
    """Derive a 64-bit seed from a master seed and a path of labels.

    Path elements may be strings, ints, or floats; they are hashed into the
    digest in order, so ("env", 3) and ("env3",) give different streams.
    """
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(16, "little", signed=True))
    for part in path:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        elif isinstance(part, (int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, float):
            h.update(b"f" + np.float64(part).tobytes())
        else:
            raise TypeError(f"unsupported path element {part!r}")
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(master_seed: int, *path) -> np.random.Generator:
    """PCG64 generator seeded from the derived sub-stream."""
    return np.random.default_rng(derive_seed(master_seed, *path))
