"""Golden-vs-faulty comparison metrics.

All metrics except :func:`bitflip_ratio` compare real values (dequantized on
the quant path). Faulty OFMs may hold inf/NaN after a float32 bit flip; those
never raise. ``|g - NaN|`` is treated as ``+inf``.
"""

import logging
from collections.abc import Sequence
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from axfi_lite.exceptions import ComparisonError
from axfi_lite.tensors import QuantTensor, as_real
from axfi_lite.utils import JsonFloat, encode_float

if TYPE_CHECKING:
    from axfi_lite.engine import LayerTrace

logger = logging.getLogger(__name__)

SSIM_K1 = 0.01
SSIM_K2 = 0.03
MIN_DYNAMIC_RANGE = 1e-6


def _pair(golden: object, faulty: object) -> tuple[np.ndarray, np.ndarray]:
    g = as_real(golden)
    f = as_real(faulty)
    if g.shape != f.shape:
        raise ComparisonError(f"Cannot compare OFMs of shape {g.shape} and {f.shape}")
    return g.reshape(-1), f.reshape(-1)


def _abs_diff(g: np.ndarray, f: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        diff = np.abs(g - f)
    return np.where(np.isnan(diff), np.inf, diff)


# ===== Distance metrics =====


def max_difference(golden: np.ndarray | QuantTensor, faulty: np.ndarray | QuantTensor) -> float:
    """Largest element-wise ``|g - f|``; ``+inf`` when the faulty OFM is non-finite.

    Raises:
        ComparisonError: On shape mismatch
    """
    g, f = _pair(golden, faulty)
    if g.size == 0:
        return 0.0
    return float(np.max(_abs_diff(g, f)))


def psnr(golden: np.ndarray | QuantTensor, faulty: np.ndarray | QuantTensor) -> float:
    """``10 * log10(peak^2 / MSE)`` with ``peak = max(g)``.

    A non-positive peak falls back to ``max|g|``. Returns ``+inf`` for zero MSE
    and ``-inf`` when the MSE is non-finite or the golden OFM is all zero.
    """
    g, f = _pair(golden, faulty)
    with np.errstate(all="ignore"):
        mse = float(np.mean((g - f) ** 2)) if g.size else 0.0
    if not np.isfinite(mse):
        return float("-inf")
    if mse == 0.0:
        return float("inf")
    peak = float(np.max(g))
    if peak <= 0.0:
        peak = float(np.max(np.abs(g)))
    if peak == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(peak * peak / mse))


class SsimConstants(BaseModel):
    """Regularizers of the global SSIM."""

    c1: float = Field(gt=0.0)
    c2: float = Field(gt=0.0)
    dynamic_range: float = Field(gt=0.0, description="L used to derive c1 and c2")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_range(cls, dynamic_range: float) -> "SsimConstants":
        """``c1 = (0.01 L)^2``, ``c2 = (0.03 L)^2`` with L clamped to >= 1e-6."""
        L = max(float(dynamic_range), MIN_DYNAMIC_RANGE)
        return cls(c1=(SSIM_K1 * L) ** 2, c2=(SSIM_K2 * L) ** 2, dynamic_range=L)

    @classmethod
    def for_golden(cls, golden: np.ndarray | QuantTensor) -> "SsimConstants":
        g = as_real(golden)
        if g.size == 0:
            return cls.from_range(MIN_DYNAMIC_RANGE)
        return cls.from_range(float(np.max(g) - np.min(g)))


def ssim(
    golden: np.ndarray | QuantTensor,
    faulty: np.ndarray | QuantTensor,
    constants: SsimConstants | None = None,
) -> float:
    """Single global SSIM over the whole OFM using population statistics.

    Args:
        golden: Golden OFM
        faulty: Faulty or approximate OFM of the same shape
        constants: Regularizers; derived from the golden range when omitted

    Returns:
        SSIM in [-1, 1]; 0.0 when the faulty OFM holds non-finite values

    Raises:
        ComparisonError: On shape mismatch or fewer than two elements
    """
    g, f = _pair(golden, faulty)
    if g.size < 2:
        raise ComparisonError(f"SSIM needs at least 2 elements, got {g.size}")
    if not np.all(np.isfinite(f)):
        return 0.0
    c = constants or SsimConstants.for_golden(g)
    mu_g = float(np.mean(g))
    mu_f = float(np.mean(f))
    dg = g - mu_g
    df = f - mu_f
    var_g = float(np.mean(dg * dg))
    var_f = float(np.mean(df * df))
    cov = float(np.mean(dg * df))
    num = (2.0 * mu_g * mu_f + c.c1) * (2.0 * cov + c.c2)
    den = (mu_g * mu_g + mu_f * mu_f + c.c1) * (var_g + var_f + c.c2)
    return num / den


# ===== Layer-level error =====


class NormalizedError(BaseModel):
    """Per-element ``|g - f| / max|g|`` plus its mean."""

    errors: np.ndarray
    mean: float
    denominator: float
    degenerate: bool = Field(
        default=False, description="Golden OFM was all zero; denominator forced to 1"
    )

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def peak(self) -> float:
        return float(np.max(self.errors)) if self.errors.size else 0.0


def normalized_error(
    golden: np.ndarray | QuantTensor, faulty: np.ndarray | QuantTensor
) -> NormalizedError:
    """Element-wise error normalized by the golden OFM's largest magnitude.

    Example:
        ```python
        ne = normalized_error(np.array([10.0, -2.0, 4.0]), np.array([8.0, -2.0, 4.0]))
        ne.errors  # [0.2, 0.0, 0.0]
        ```
    """
    golden_real = as_real(golden)
    g, f = _pair(golden, faulty)
    denominator = float(np.max(np.abs(g))) if g.size else 0.0
    degenerate = denominator == 0.0
    if degenerate:
        logger.warning("All-zero golden OFM; normalizing by 1")
        denominator = 1.0
    errors = (_abs_diff(g, f) / denominator).reshape(golden_real.shape)
    mean = float(np.mean(errors)) if errors.size else 0.0
    return NormalizedError(
        errors=errors, mean=mean, denominator=denominator, degenerate=degenerate
    )


def bitflip_ratio(golden: QuantTensor, faulty: QuantTensor) -> float:
    """Percentage of differing bits between two int8 OFMs.

    Raises:
        ComparisonError: On shape or scale mismatch (values not bit-comparable)
    """
    if golden.shape != faulty.shape:
        raise ComparisonError(f"Cannot compare OFMs of shape {golden.shape} and {faulty.shape}")
    if golden.scale != faulty.scale or golden.zero_point != faulty.zero_point:
        raise ComparisonError(
            f"OFMs quantized differently (scale {golden.scale} vs {faulty.scale})"
        )
    if golden.numel == 0:
        return 0.0
    xor = np.bitwise_xor(golden.data.view(np.uint8), faulty.data.view(np.uint8))
    flipped = int(np.unpackbits(xor.reshape(-1)).sum())
    return 100.0 * flipped / (8 * golden.numel)


# ===== Fault classification =====


class FaultClass(str, Enum):
    CRITICAL = "Critical"
    NON_CRITICAL = "NonCritical"
    MASKED = "Masked"


def classify_fault(
    golden_logits: np.ndarray, faulty_logits: np.ndarray, eps: float = 0.0
) -> FaultClass:
    """Masked if the logits move by at most ``eps``, Critical if the argmax changes.

    Raises:
        ComparisonError: On length mismatch
    """
    g = np.asarray(golden_logits, dtype=np.float64).reshape(-1)
    f = np.asarray(faulty_logits, dtype=np.float64).reshape(-1)
    if g.shape != f.shape:
        raise ComparisonError(f"Logit lengths differ: {g.size} vs {f.size}")
    if max_difference(g, f) <= eps:
        return FaultClass.MASKED
    if int(np.argmax(g)) != int(np.argmax(f)):
        return FaultClass.CRITICAL
    return FaultClass.NON_CRITICAL


def propagation_depth(
    golden_trace: "LayerTrace",
    faulty_trace: "LayerTrace",
    injected_layer: int,
    eps: float = 0.0,
    stages: Sequence[int] | None = None,
) -> tuple[int, list[bool]]:
    """How far past ``injected_layer`` the fault remains visible.

    Without ``stages`` every layer counts as one step. With the per-layer
    stage ids of :func:`axfi_lite.layers.stage_ids`, depth counts stages: a
    later stage is changed when its output (its last layer's OFM) differs, and
    a change the injected stage's own ReLU or pooling absorbs stays at 0.

    Returns:
        (depth, flags) where ``flags[l]`` is whether layer ``l``'s OFM differs by
        more than ``eps``; depth is the distance from the injected layer (or
        stage) to the last changed one, 0 if only the injected one changed and
        -1 if no layer from ``injected_layer`` on changed.

    Raises:
        ComparisonError: If the traces or stage ids have different lengths
    """
    if len(golden_trace.ofms) != len(faulty_trace.ofms):
        raise ComparisonError(
            f"Trace lengths differ: {len(golden_trace.ofms)} vs {len(faulty_trace.ofms)}"
        )
    flags = [
        max_difference(golden_trace.real(idx), faulty_trace.real(idx)) > eps
        for idx in range(len(golden_trace.ofms))
    ]
    if not any(flags[injected_layer:]):
        return -1, flags
    if stages is None:
        stages = list(range(len(flags)))
    elif len(stages) != len(flags):
        raise ComparisonError(f"{len(stages)} stage ids for {len(flags)} layers")
    origin = stages[injected_layer]
    # last layer of each stage past the injected one
    outputs = {stages[idx]: idx for idx in range(injected_layer, len(flags))}
    changed = [stage for stage, idx in outputs.items() if stage > origin and flags[idx]]
    return (max(changed) - origin if changed else 0), flags


# ===== Records =====


class MetricRecord(BaseModel):
    """The three criticality predictors at the injected layer's OFM."""

    max_difference: JsonFloat = Field(ge=0.0)
    psnr_db: JsonFloat
    ssim: JsonFloat

    model_config = ConfigDict(frozen=True)

    def csv_fields(self) -> list[str]:
        return [str(encode_float(v)) for v in (self.max_difference, self.psnr_db, self.ssim)]


def metric_record(
    golden: np.ndarray | QuantTensor, faulty: np.ndarray | QuantTensor
) -> MetricRecord:
    """Max Difference, PSNR and SSIM (default constants) of one OFM pair."""
    return MetricRecord(
        max_difference=max_difference(golden, faulty),
        psnr_db=psnr(golden, faulty),
        ssim=ssim(golden, faulty),
    )


class MaskedDepthSummary(BaseModel):
    """Fractions of Masked faults whose effect dies out within 0 or 1 layers."""

    count: int
    within_0: float | None = None
    within_1: float | None = None


def masked_depth_summary(depths: list[int]) -> MaskedDepthSummary:
    if not depths:
        return MaskedDepthSummary(count=0)
    arr = np.asarray(depths)
    return MaskedDepthSummary(
        count=len(depths),
        within_0=float(np.mean(arr <= 0)),
        within_1=float(np.mean(arr <= 1)),
    )
