"""Error characterization of behavioral multipliers.

Every statistic is taken over the exhaustive set of 65,536 signed operand pairs.
Error distance ED(a, b) = lut(a, b) - a*b. Integer sums are exact in int64 and
real-valued sums use ``math.fsum``, so results do not depend on enumeration
order.

Percentages of MAE and AWCE are normalized by 2^16 (the convention of the
EvoApprox library for 8-bit multipliers); MRE skips pairs whose exact product
is 0.
"""

import math

import numpy as np
from pydantic import BaseModel, Field

from axfi_lite.multipliers import MultiplierLUT, operand_grid
from axfi_lite.suppressor import BitSuppressorConfig, suppression_bits

OUTPUT_RANGE = float(1 << 16)


class MultiplierErrorReport(BaseModel):
    """Error metrics of one multiplier."""

    name: str
    mae: float = Field(ge=0.0, description="Mean |ED|")
    mae_pct: float = Field(ge=0.0, description="MAE / 2^16 * 100")
    awce: float = Field(ge=0.0, description="Max |ED|")
    awce_pct: float = Field(ge=0.0, description="AWCE / 2^16 * 100")
    mre_pct: float = Field(ge=0.0, description="Mean |ED| / |a*b| * 100 over a*b != 0")
    mean_ed: float = Field(description="Mean signed ED (bias)")
    var_ed: float = Field(ge=0.0, description="Population variance of ED")
    rms_ed: float = Field(ge=0.0, description="sqrt(mean ED^2)")
    pairs: int = 65536
    mre_pairs: int = Field(description="Pairs with nonzero exact product used for MRE")
    normalization: str = "2^16"

    def as_row(self) -> dict[str, float | str]:
        return {
            "name": self.name,
            "MAE%": self.mae_pct,
            "AWCE%": self.awce_pct,
            "MRE%": self.mre_pct,
            "Var-ED": self.var_ed,
            "RMS-ED": self.rms_ed,
        }


def error_distance(lut: MultiplierLUT) -> np.ndarray:
    """(256, 256) int64 error-distance matrix, row a+128, column b+128."""
    a, b = operand_grid()
    return lut.as_matrix().astype(np.int64) - a * b


def characterize(lut: MultiplierLUT) -> MultiplierErrorReport:
    """Exhaustive error statistics of ``lut``."""
    a, b = operand_grid()
    exact = (a * b).reshape(-1)
    ed = error_distance(lut).reshape(-1)
    n = ed.size

    abs_ed = np.abs(ed)
    mae = int(abs_ed.sum()) / n
    awce = float(abs_ed.max())
    mean_ed = int(ed.sum()) / n
    rms_ed = math.sqrt(int((ed * ed).sum()) / n)
    var_ed = math.fsum(((ed - mean_ed) ** 2).tolist()) / n

    nonzero = exact != 0
    rel = abs_ed[nonzero] / np.abs(exact[nonzero])
    mre = math.fsum(rel.tolist()) / int(nonzero.sum())

    return MultiplierErrorReport(
        name=lut.name,
        mae=mae,
        mae_pct=mae / OUTPUT_RANGE * 100.0,
        awce=awce,
        awce_pct=awce / OUTPUT_RANGE * 100.0,
        mre_pct=mre * 100.0,
        mean_ed=mean_ed,
        var_ed=var_ed,
        rms_ed=rms_ed,
        pairs=n,
        mre_pairs=int(nonzero.sum()),
    )


class ProductErrorMap(BaseModel):
    """Error of a multiplication unit over every operand pair."""

    label: str
    error: list[list[int]] = Field(description="(256, 256) ED matrix, row a+128, col b+128")
    normalized: list[list[float]] = Field(description="ED / max|a*b|")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.error, dtype=np.int64)


def product_error_map(
    lut: MultiplierLUT | None = None,
    suppressor: BitSuppressorConfig | None = None,
) -> ProductErrorMap:
    """Error map of an AxMult, a bit suppressor on exact products, or both (AxMult+).

    The suppressor acts on the 16-bit product: its ``bit_mask`` positions are
    taken in the high byte (position + 8), i.e. the significant bits of the
    product. Element ``i`` of the row-major map consumes draw ``i`` of the
    suppressor stream.
    """
    a, b = operand_grid()
    exact = a * b
    product = exact.copy() if lut is None else lut.as_matrix().astype(np.int64)

    labels = []
    if lut is not None:
        labels.append(lut.name)
    if suppressor is not None:
        bits = suppression_bits(product.size, suppressor).reshape(product.shape)
        hit = bits >= 0
        as16 = product.astype(np.int16).view(np.uint16)
        clear = np.zeros_like(as16)
        clear[hit] = (1 << (bits[hit] + 8)).astype(np.uint16)
        product = (as16 & ~clear).view(np.int16).astype(np.int64)
        labels.append("suppressor")

    ed = product - exact
    peak = float(np.max(np.abs(exact)))
    return ProductErrorMap(
        label="+".join(labels) or "exact",
        error=ed.tolist(),
        normalized=(ed / peak).tolist(),
    )
