"""Deterministic seed derivation.

All randomness in the package flows from one root seed.  Purpose-specific
streams are derived as SeedSequence([root, crc32(tag), *indices]), so any
component can be re-created in isolation and parallel streams never collide.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np


def _tag_int(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_rng(root_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Generator for stream `tag` with optional integer sub-indices."""
    seq = np.random.SeedSequence([int(root_seed), _tag_int(tag), *[int(i) for i in indices]])
    return np.random.Generator(np.random.PCG64(seq))


def angle_index(angle: float) -> int:
    """Stable integer encoding of a float angle, for per-angle seed streams."""
    return zlib.crc32(struct.pack("<d", float(angle)))
