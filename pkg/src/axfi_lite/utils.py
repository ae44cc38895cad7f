"""Utility functions for axfi-lite.

Seeding helpers derive every random stream from a master seed plus a tuple of
integer keys (fault index, image index, ...), so results never depend on the
order in which work items are scheduled.
"""

import hashlib
import json
import math
from typing import Annotated, Any

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def seed_sequence(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """Build a SeedSequence keyed by ``master_seed`` and ``keys``.

    Args:
        master_seed: Non-negative master seed
        *keys: Non-negative integer keys identifying the work item

    Returns:
        SeedSequence whose streams are independent for distinct key tuples
    """
    return np.random.SeedSequence([int(master_seed), *(int(k) for k in keys)])


def derive_seed(master_seed: int, *keys: int) -> int:
    """Derive a 64-bit child seed from ``master_seed`` and ``keys``."""
    state = seed_sequence(master_seed, *keys).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Create a generator keyed by ``master_seed`` and ``keys``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *keys)))


def encode_float(value: float) -> float | str:
    """Encode non-finite floats as the strings "inf", "-inf" and "nan"."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def decode_float(value: float | str) -> float:
    """Inverse of :func:`encode_float`."""
    if isinstance(value, str):
        return float(value)
    return value


# float that survives JSON round trips as "inf" / "-inf" / "nan"
JsonFloat = Annotated[
    float,
    BeforeValidator(decode_float),
    PlainSerializer(encode_float, when_used="json"),
]


def canonical_json(data: Any) -> str:
    """Serialize ``data`` with sorted keys and no whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def content_hash(data: Any, length: int = 16) -> str:
    """SHA-256 of the canonical JSON of ``data``, truncated to ``length`` hex chars."""
    digest = hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()
    return digest[:length]


def file_checksum(path: Any) -> str:
    """SHA-256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()
