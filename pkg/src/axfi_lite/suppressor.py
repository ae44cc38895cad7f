"""Bit suppressor error model (the "+" in AxMult+).

With a configured probability each OFM element has one bit, drawn uniformly
from ``bit_mask``, forced to 0 in its two's-complement byte. Randomness is
counter-based: a Philox stream keyed by the seed, where element ``i`` always
consumes draw ``i``. An element's fate therefore depends only on (seed, i),
not on how many elements were processed before it.
"""

import logging

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from axfi_lite.tensors import QuantTensor
from axfi_lite.utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_BIT_MASK = (6, 7)
DEFAULT_PROBABILITY = 0.05


class BitSuppressorConfig(BaseModel):
    """Configuration of the bit suppression unit.

    Example:
        ```python
        cfg = BitSuppressorConfig(bit_mask=[7], probability=1.0, seed=3)
        ```
    """

    bit_mask: list[int] = Field(
        default_factory=lambda: list(DEFAULT_BIT_MASK),
        description="Bit positions (0-7) of an 8-bit OFM value eligible for suppression",
    )
    probability: float = Field(
        default=DEFAULT_PROBABILITY,
        ge=0.0,
        le=1.0,
        description="Per-element activation probability",
    )
    seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit stream key")

    @field_validator("bit_mask")
    def validate_bit_mask(cls, v: list[int]) -> list[int]:
        """Positions must be 0-7; duplicates are dropped and the mask sorted."""
        for bit in v:
            if not 0 <= bit <= 7:
                raise ValueError(f"Invalid bit position {bit}: must be within 0-7")
        return sorted(set(v))

    @model_validator(mode="after")
    def validate_mask_when_active(self) -> "BitSuppressorConfig":
        if self.probability > 0 and not self.bit_mask:
            raise ValueError("bit_mask must be non-empty when probability > 0")
        return self

    def with_seed(self, seed: int) -> "BitSuppressorConfig":
        return self.model_copy(update={"seed": int(seed)})


def suppression_bits(count: int, cfg: BitSuppressorConfig, seed: int | None = None) -> np.ndarray:
    """Bit chosen for each of ``count`` elements, or -1 where the unit stays idle.

    Args:
        count: Number of elements
        cfg: Suppressor configuration
        seed: Stream key overriding ``cfg.seed``

    Returns:
        (count,) int64 array of bit positions or -1
    """
    if count == 0 or cfg.probability == 0.0:
        return np.full(count, -1, dtype=np.int64)
    key = int(cfg.seed if seed is None else seed)
    draws = np.random.Generator(np.random.Philox(key=key)).random((count, 2))
    active = draws[:, 0] < cfg.probability
    mask = np.asarray(cfg.bit_mask, dtype=np.int64)
    choice = np.minimum((draws[:, 1] * mask.size).astype(np.int64), mask.size - 1)
    return np.where(active, mask[choice], -1)


def suppress_bits(
    values: QuantTensor, cfg: BitSuppressorConfig, seed: int | None = None
) -> QuantTensor:
    """Clear one masked bit in randomly selected elements of ``values``.

    Args:
        values: Quantized OFM
        cfg: Suppressor configuration
        seed: Stream key overriding ``cfg.seed`` (per-image keys in campaigns)

    Returns:
        New QuantTensor with the same scale
    """
    bits = suppression_bits(values.numel, cfg, seed)
    if not np.any(bits >= 0):
        return values
    raw = values.data.reshape(-1).view(np.uint8).copy()
    hit = bits >= 0
    clear = np.zeros_like(raw)
    clear[hit] = (1 << bits[hit]).astype(np.uint8)
    raw &= ~clear
    logger.debug(f"Suppressed bits in {int(hit.sum())} of {values.numel} elements")
    return values.with_data(raw.view(np.int8).reshape(values.shape))


def suppressor_tap(cfg: BitSuppressorConfig):
    """Engine tap suppressing bits with a stream keyed by (cfg.seed, run seed)."""

    def tap(ofm: QuantTensor, seed: int) -> QuantTensor:
        return suppress_bits(ofm, cfg, seed=derive_seed(cfg.seed, seed))

    return tap
