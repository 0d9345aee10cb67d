"""Deterministic seed derivation for every random stage.

A single master seed drives the whole pipeline.  Child seeds are derived by
hashing the master seed together with a label path (stage name, sequence
index, repetition index, ...) through SHA-256, so streams for different
stages are independent and insensitive to execution order.  The derivation
structure is ``derive_seed(master, stage, *labels)``; labels are stringified,
so integers, floats (via ``repr``) and strings are all stable inputs.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "derive_rng"]

_SEP = b"\x1f"


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 64-bit child seed from ``master`` and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(_SEP)
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


def derive_rng(master: int, *labels: object) -> np.random.Generator:
    """A fresh generator seeded with :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(master, *labels))
