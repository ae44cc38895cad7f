"""Statistical fault-injection sample sizing.

``n = ceil(N / (1 + e^2 (N - 1) / (t^2 p (1 - p))))`` for a population of N
bits, margin of error e, estimated failure probability p and the two-sided
normal quantile t of the requested confidence level. Only the tabulated
confidence levels are accepted.
"""

import math

from pydantic import BaseModel, Field, field_validator, model_validator

from axfi_lite.exceptions import SamplingError

# Two-sided standard normal quantiles
T_VALUES: dict[float, float] = {
    0.90: 1.6448536269514722,
    0.95: 1.959963984540054,
    0.99: 2.5758293035489004,
}


def required_sample_size(N: int, e: float, confidence: float, p: float = 0.5) -> int:
    """Number of faults to inject for margin ``e`` at ``confidence``.

    Args:
        N: Population size (total injectable bits), N >= 1
        e: Margin of error, 0 < e < 1
        confidence: One of 0.90, 0.95, 0.99
        p: Estimated probability of a failure, 0 < p < 1

    Returns:
        Sample size n with 1 <= n <= N

    Raises:
        SamplingError: If any argument is out of range
    """
    if N < 1:
        raise SamplingError(f"Population size must be >= 1, got {N}")
    if not 0.0 < e < 1.0:
        raise SamplingError(f"Margin of error must lie in (0, 1), got {e}")
    if not 0.0 < p < 1.0:
        raise SamplingError(f"Failure probability must lie in (0, 1), got {p}")
    if confidence not in T_VALUES:
        raise SamplingError(
            f"Unsupported confidence {confidence}; choose one of {sorted(T_VALUES)}"
        )
    t = T_VALUES[confidence]
    n = math.ceil(N / (1.0 + e * e * (N - 1) / (t * t * p * (1.0 - p))))
    return max(1, min(N, n))


class FaultSamplePlan(BaseModel):
    """Statistical fault-injection sample plan."""

    population_size: int = Field(ge=1, description="Total number of injectable bits N")
    margin_of_error: float = Field(gt=0.0, lt=1.0)
    confidence: float
    p: float = Field(default=0.5, gt=0.0, lt=1.0, description="Estimated failure probability")
    sample_size: int = Field(ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("confidence")
    def validate_confidence(cls, v: float) -> float:
        """Only tabulated confidence levels are supported."""
        if v not in T_VALUES:
            raise ValueError(f"confidence must be one of {sorted(T_VALUES)}")
        return v

    @model_validator(mode="after")
    def validate_bounds(self) -> "FaultSamplePlan":
        if self.sample_size > self.population_size:
            raise ValueError("sample_size cannot exceed population_size")
        return self

    @classmethod
    def build(
        cls, N: int, e: float, confidence: float, p: float = 0.5, master_seed: int = 0
    ) -> "FaultSamplePlan":
        return cls(
            population_size=N,
            margin_of_error=e,
            confidence=confidence,
            p=p,
            sample_size=required_sample_size(N, e, confidence, p),
            master_seed=master_seed,
        )
