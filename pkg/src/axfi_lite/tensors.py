"""Quantized tensor type and the symmetric int8 quantization rules.

Float tensors are plain ``numpy`` arrays of dtype float32. Quantized tensors
pair an int8 array with a positive per-tensor scale; the zero point is fixed at
0 (symmetric scheme), so ``real = scale * int``.
"""

import logging
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from axfi_lite.exceptions import QuantizationError

logger = logging.getLogger(__name__)

INT8_MIN = -128
INT8_MAX = 127
QMAX = 127


class QuantTensor(BaseModel):
    """8-bit signed tensor with a per-tensor scale.

    Example:
        ```python
        qt = quantize(np.array([-1.27, 0.635], dtype=np.float32))
        qt.data    # array([-127, 64], dtype=int8)
        qt.scale   # 0.01
        ```
    """

    data: np.ndarray
    scale: float = Field(gt=0.0, description="Positive real scale: real = scale * int")
    zero_point: int = Field(default=0, description="Fixed at 0 (symmetric scheme)")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("data")
    def validate_data(cls, v: Any) -> np.ndarray:
        """Require an int8 array."""
        if not isinstance(v, np.ndarray) or v.dtype != np.int8:
            raise ValueError("QuantTensor data must be an int8 numpy array")
        return v

    @field_validator("zero_point")
    def validate_zero_point(cls, v: int) -> int:
        """Only the symmetric scheme is supported."""
        if v != 0:
            raise ValueError("zero_point must be 0 (symmetric quantization)")
        return v

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def dequantize(self) -> np.ndarray:
        """Real values as float64."""
        return self.data.astype(np.float64) * self.scale

    def with_data(self, data: np.ndarray) -> "QuantTensor":
        """Same scale, new int8 payload."""
        return QuantTensor(data=data.astype(np.int8, copy=False), scale=self.scale)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(values: np.ndarray, scale: float | None = None) -> QuantTensor:
    """Quantize real values to int8 with saturation.

    Args:
        values: Real-valued array (must be finite)
        scale: Explicit scale; ``max|v| / 127`` (1.0 for all-zero input) when None

    Returns:
        QuantTensor with the same shape

    Raises:
        QuantizationError: If ``values`` contains non-finite entries
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise QuantizationError("Cannot quantize non-finite values")
    if scale is None:
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if peak == 0.0:
            logger.warning("All-zero tensor quantized with degenerate scale 1.0")
            return QuantTensor(data=np.zeros(values.shape, dtype=np.int8), scale=1.0)
        scale = peak / QMAX
        # v / peak * 127 keeps exact ties (0.635 / 1.27 == 0.5) that v / scale would blur
        ratio = values / peak * QMAX
    else:
        ratio = values / scale
    ints = np.clip(round_half_away(ratio), INT8_MIN, INT8_MAX)
    return QuantTensor(data=ints.astype(np.int8), scale=float(scale))


def quantize_bias(bias: np.ndarray, input_scale: float, weight_scale: float) -> np.ndarray:
    """Quantize a bias to int32 at scale ``input_scale * weight_scale``."""
    acc_scale = input_scale * weight_scale
    ints = round_half_away(np.asarray(bias, dtype=np.float64) / acc_scale)
    info = np.iinfo(np.int32)
    return np.clip(ints, info.min, info.max).astype(np.int32)


def requantize(
    acc: np.ndarray, input_scale: float, weight_scale: float, output_scale: float
) -> np.ndarray:
    """Scale int accumulators back to int8.

    ``round_half_away(acc * scale_in * scale_w / scale_out)`` clamped to
    [-128, 127].
    """
    multiplier = input_scale * weight_scale / output_scale
    scaled = round_half_away(acc.astype(np.float64) * multiplier)
    return np.clip(scaled, INT8_MIN, INT8_MAX).astype(np.int8)


def as_real(ofm: "np.ndarray | QuantTensor") -> np.ndarray:
    """Real-valued float64 view of a float or quantized OFM."""
    if isinstance(ofm, QuantTensor):
        return ofm.dequantize()
    return np.asarray(ofm, dtype=np.float64)
