"""Campaign configuration.

A campaign is described by one JSON document validated into
:class:`CampaignConfig`. Exactly one mode is selected through the ``kind`` tag:

- ``fi``: bit-flip fault injection (single faults or a bit-flip rate)
- ``axmult``: approximate multiplier in the compromised layer
- ``axmult_plus``: approximate multiplier plus bit suppressor
- ``suppressor``: bit suppressor alone

Relative paths in a config file resolve against the file's directory. Run
directories live under ``$AXFI_RUN_ROOT`` (default ``./runs``) and are named by
the config's content hash.
"""

import json
import os
from pathlib import Path
from typing import Annotated, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_validator,
    model_validator,
)

from axfi_lite.exceptions import ConfigurationError
from axfi_lite.faults import FaultSite
from axfi_lite.multipliers import MultiplierLUT, build_exact_lut, build_fixture_lut, load_lut
from axfi_lite.sampling import T_VALUES
from axfi_lite.suppressor import BitSuppressorConfig
from axfi_lite.utils import content_hash

RUN_ROOT_ENV = "AXFI_RUN_ROOT"
DEFAULT_RUN_ROOT = "runs"

LutKind = Literal["file", "exact", "operand_truncate", "product_offset", "product_zero_lsb"]


def run_root() -> Path:
    """Root directory for run outputs."""
    return Path(os.environ.get(RUN_ROOT_ENV, DEFAULT_RUN_ROOT))


class LutSource(BaseModel):
    """Where a multiplier table comes from: a LUT file or a built-in table.

    Example:
        ```python
        LutSource(kind="file", path="luts/mul8s_1L12.axlut")
        LutSource(kind="operand_truncate", param=3)
        ```
    """

    kind: LutKind = "exact"
    path: Path | None = Field(default=None, description="LUT file (kind='file')")
    param: int | None = Field(default=None, description="Fixture parameter (k or offset)")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_source(self) -> "LutSource":
        if self.kind == "file" and self.path is None:
            raise ValueError("LUT kind 'file' needs a path")
        if self.kind not in ("file", "exact") and self.param is None:
            raise ValueError(f"LUT kind '{self.kind}' needs a param")
        return self

    def load(self) -> MultiplierLUT:
        """Materialize the table."""
        if self.kind == "file":
            return load_lut(self.path)
        if self.kind == "exact":
            return build_exact_lut()
        return build_fixture_lut(self.kind, self.param)

    def label(self) -> str:
        if self.kind == "file":
            return Path(self.path).stem
        if self.kind == "exact":
            return "exact"
        return f"{self.kind}({self.param})"


# ===== Campaign modes =====


class FIMode(BaseModel):
    """Bit-flip fault injection."""

    kind: Literal["fi"] = "fi"
    fault_model: Literal["single", "rate"] = Field(
        default="rate", description="One bit per faulty inference, or a fraction of all bits"
    )
    site: FaultSite = Field(default="weight_i8", description="Weights (int8 or float32) or OFMs")
    rate: float = Field(default=0.1, gt=0.0, le=1.0, description="Bit-flip rate (rate model)")

    @property
    def path(self) -> str:
        return "float" if self.site == "weight_f32" else "quant"

    def label(self) -> str:
        if self.fault_model == "single":
            return f"FI-single[{self.site}]"
        return f"FI-rate({self.rate})[{self.site}]"


class AxMultMode(BaseModel):
    """Approximate multiplier in the compromised layer."""

    kind: Literal["axmult"] = "axmult"
    lut: LutSource

    def label(self) -> str:
        return f"AxMult[{self.lut.label()}]"


class AxMultPlusMode(BaseModel):
    """Approximate multiplier followed by the bit suppressor."""

    kind: Literal["axmult_plus"] = "axmult_plus"
    lut: LutSource
    suppressor: BitSuppressorConfig = Field(default_factory=BitSuppressorConfig)

    def label(self) -> str:
        return f"AxMult+[{self.lut.label()}]"


class SuppressorOnlyMode(BaseModel):
    """Bit suppressor on exact products."""

    kind: Literal["suppressor"] = "suppressor"
    suppressor: BitSuppressorConfig = Field(default_factory=BitSuppressorConfig)

    def label(self) -> str:
        return "Suppressor"


CampaignMode = Annotated[
    FIMode | AxMultMode | AxMultPlusMode | SuppressorOnlyMode, Field(discriminator="kind")
]


class CampaignConfig(BaseModel):
    """Configuration of one FI or AxC-emulation campaign.

    Example:
        ```python
        cfg = CampaignConfig(
            model_path="fixture/model.json",
            dataset_images="mnist/t10k-images-idx3-ubyte",
            dataset_labels="mnist/t10k-labels-idx1-ubyte",
            subset_size=200,
            mode={"kind": "axmult_plus", "lut": {"kind": "operand_truncate", "param": 3}},
            compromised_layer=0,
        )
        ```
    """

    # ===== Inputs =====

    model_path: Path | None = Field(default=None, description="Model manifest JSON")
    dataset_images: Path | None = Field(default=None, description="IDX image file")
    dataset_labels: Path | None = Field(default=None, description="IDX label file")
    subset_size: int | None = Field(
        default=None, ge=0, description="Seed-pinned subset of the dataset (all when None)"
    )
    subset_seed: int = Field(default=0, ge=0)

    # ===== Mode =====

    mode: CampaignMode
    compromised_layer: int = Field(
        ge=0, description="Layer that receives the faults or the approximate unit"
    )
    measured_layer: int | None = Field(
        default=None,
        ge=0,
        description="Layer whose per-neuron peak errors form protection sets "
        "(the compromised layer when None)",
    )

    # ===== Fault counts =====

    faults_per_image: int | None = Field(
        default=None,
        ge=0,
        description="FI-single: faults per image; FI-rate: repetitions over the subset",
    )
    sample_size: int | None = Field(
        default=None, ge=0, description="FI-single: total faults (overrides faults_per_image)"
    )
    margin_of_error: float = Field(
        default=0.05, gt=0.0, lt=1.0, description="Statistical FI margin when no count is given"
    )
    confidence: float = Field(default=0.95, description="Statistical FI confidence level")
    failure_probability: float = Field(default=0.5, gt=0.0, lt=1.0)

    # ===== Seeds and tolerances =====

    master_seed: int = Field(default=0, ge=0, lt=2**64)
    float_eps: float = Field(default=1e-6, ge=0.0, description="Masked tolerance, float logits")
    quant_eps: float = Field(default=0.0, ge=0.0, description="Masked tolerance, int logits")
    propagation_eps: float | None = Field(
        default=None,
        ge=0.0,
        description="OFM change tolerance for propagation depth (the Masked tolerance when None)",
    )

    # ===== Execution =====

    workers: int = Field(default=1, ge=1, description="Parallel workers (results unaffected)")
    output_dir: Path | None = Field(
        default=None, description="Run directory (content-hash named under the run root if None)"
    )
    show_progress: bool = Field(default=False, description="Show a progress bar")

    _base_dir: Path | None = PrivateAttr(default=None)

    model_config = ConfigDict(frozen=True)

    @field_validator("confidence")
    def validate_confidence(cls, v: float) -> float:
        if v not in T_VALUES:
            raise ValueError(f"confidence must be one of {sorted(T_VALUES)}")
        return v

    @model_validator(mode="after")
    def validate_counts(self) -> "CampaignConfig":
        if self.sample_size is not None and self.faults_per_image is not None:
            raise ValueError("Set either sample_size or faults_per_image, not both")
        if self.dataset_labels is not None and self.dataset_images is None:
            raise ValueError("dataset_labels given without dataset_images")
        if self.measured_layer is not None and self.measured_layer < self.compromised_layer:
            raise ValueError(
                f"measured_layer {self.measured_layer} precedes "
                f"compromised_layer {self.compromised_layer}"
            )
        return self

    @property
    def eps(self) -> float:
        """Masked tolerance for the mode's execution path."""
        if isinstance(self.mode, FIMode) and self.mode.path == "float":
            return self.float_eps
        return self.quant_eps

    @property
    def depth_eps(self) -> float:
        """OFM change tolerance used for propagation depth."""
        return self.eps if self.propagation_eps is None else self.propagation_eps

    @property
    def peak_layer(self) -> int:
        """Layer whose per-neuron peaks the campaign records."""
        return self.compromised_layer if self.measured_layer is None else self.measured_layer

    @property
    def is_fi(self) -> bool:
        return isinstance(self.mode, FIMode)

    # ===== Persistence =====

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        """Load a JSON config; relative paths resolve against its directory.

        Raises:
            ConfigurationError: If the file is not valid JSON
            pydantic.ValidationError: If the document does not validate
        """
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON: {e}") from e
        return cls.model_validate(data).resolve_paths(path.parent)

    def with_updates(self, **updates) -> "CampaignConfig":
        """Validated copy with ``updates`` applied; keeps the config file's directory."""
        updated = type(self).model_validate({**self.model_dump(), **updates})
        updated._base_dir = self._base_dir
        return updated

    def resolve_paths(self, base: str | Path) -> "CampaignConfig":
        """Copy with every relative path made relative to ``base``."""
        base = Path(base)

        def fix(p: Path | None) -> Path | None:
            if p is None or p.is_absolute():
                return p
            return base / p

        mode = self.mode
        if isinstance(mode, (AxMultMode, AxMultPlusMode)) and mode.lut.path is not None:
            lut = mode.lut.model_copy(update={"path": fix(mode.lut.path)})
            mode = mode.model_copy(update={"lut": lut})
        resolved = self.model_copy(
            update={
                "model_path": fix(self.model_path),
                "dataset_images": fix(self.dataset_images),
                "dataset_labels": fix(self.dataset_labels),
                "output_dir": fix(self.output_dir),
                "mode": mode,
            }
        )
        resolved._base_dir = base if self._base_dir is None else self._base_dir
        return resolved

    def _declared(self, p: Path | None) -> str | None:
        """``p`` as written in the config file, before resolution."""
        if p is None:
            return None
        if self._base_dir is not None:
            try:
                return p.relative_to(self._base_dir).as_posix()
            except ValueError:
                pass
        return p.as_posix()

    def content_hash(self) -> str:
        """Hash of everything that influences results (not workers/progress/output).

        Paths enter the hash as declared in the config file, so the same file
        hashes equally wherever it is stored.
        """
        data = self.model_dump(mode="json", exclude={"workers", "show_progress", "output_dir"})
        for key in ("model_path", "dataset_images", "dataset_labels"):
            data[key] = self._declared(getattr(self, key))
        lut = getattr(self.mode, "lut", None)
        if lut is not None and lut.path is not None:
            data["mode"]["lut"]["path"] = self._declared(lut.path)
        return content_hash(data)

    def run_dir(self) -> Path:
        if self.output_dir is not None:
            return self.output_dir
        return run_root() / f"{self.mode.kind}-{self.content_hash()}"


class SweepConfig(BaseModel):
    """Coarse-grain multiplier sweep: every LUT in every multiplying layer.

    Example:
        ```json
        {"model_path": "fixture/model.json",
         "dataset_images": "mnist/t10k-images-idx3-ubyte",
         "dataset_labels": "mnist/t10k-labels-idx1-ubyte",
         "subset_size": 500,
         "luts": [{"kind": "operand_truncate", "param": 2}, {"kind": "file", "path": "mul8s_1L2H.axlut"}]}
        ```
    """

    model_path: Path
    dataset_images: Path
    dataset_labels: Path
    subset_size: int | None = Field(default=None, ge=0)
    subset_seed: int = Field(default=0, ge=0)
    luts: list[LutSource] = Field(min_length=1)
    workers: int = Field(default=1, ge=1)

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepConfig":
        """Load a JSON sweep config; relative paths resolve against its directory."""
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON: {e}") from e
        cfg = cls.model_validate(data)
        base = path.parent

        def fix(p: Path) -> Path:
            return p if p.is_absolute() else base / p

        luts = [
            lut.model_copy(update={"path": fix(lut.path)}) if lut.path is not None else lut
            for lut in cfg.luts
        ]
        return cfg.model_copy(
            update={
                "model_path": fix(cfg.model_path),
                "dataset_images": fix(cfg.dataset_images),
                "dataset_labels": fix(cfg.dataset_labels),
                "luts": luts,
            }
        )
