"""Campaign result records and their JSON / CSV forms.

Reports are versioned JSON documents embedding the full campaign config and
seeds, so every table or plot can be regenerated from the file alone.
Non-finite floats are written as the strings "inf", "-inf" and "nan".
"""

import csv
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from axfi_lite.exceptions import CampaignError
from axfi_lite.faults import FaultDescriptor
from axfi_lite.metrics import FaultClass, MaskedDepthSummary, MetricRecord
from axfi_lite.options import CampaignConfig
from axfi_lite.utils import JsonFloat, encode_float

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
OUTCOME_CSV_HEADER = ["fault_id", "class", "max_difference", "psnr_db", "ssim"]
HISTOGRAM_CSV_HEADER = ["bin_left", "bin_right", "count"]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ===== Per-item records =====


class FaultOutcome(BaseModel):
    """Result of one faulty (or approximate) inference."""

    fault_id: int = Field(ge=0, description="Fault index, or image index in AxC campaigns")
    image_index: int = Field(ge=0)
    fault: FaultDescriptor | None = Field(default=None, description="None in AxC campaigns")
    mode_tag: str
    fault_class: FaultClass
    metrics: MetricRecord
    depth: int = Field(ge=-1, description="Stages the fault travels past the compromised layer")
    changed: list[bool] = Field(description="Per-layer OFM changed flags")
    correct: bool = Field(description="Faulty prediction matches the label")
    layer_mean_errors: list[JsonFloat] = Field(description="Mean normalized error per layer")
    layer_peak_errors: list[JsonFloat] = Field(description="Peak normalized error per layer")
    layer_bitflips: list[float] | None = Field(
        default=None, description="Bitflip ratio (%) per layer, quant path only"
    )

    @property
    def key(self) -> tuple[int, int]:
        return (self.fault_id, self.image_index)


class LayerErrorSummary(BaseModel):
    """Error statistics of one layer over all outcomes."""

    layer: int
    kind: str
    mean_error: JsonFloat = Field(description="Mean of per-outcome mean normalized errors")
    max_error: JsonFloat = Field(description="Largest normalized error of any element")
    mean_bitflip_pct: float | None = None
    changed_fraction: float = Field(ge=0.0, le=1.0)
    neuron_peaks: list[JsonFloat] = Field(
        default_factory=list,
        description="Per-neuron peak normalized error over images (measured layer only)",
    )


class RuntimeStats(BaseModel):
    golden_seconds: float = 0.0
    campaign_seconds: float = 0.0
    items: int = 0
    resumed_items: int = 0

    @property
    def seconds_per_item(self) -> float:
        computed = self.items - self.resumed_items
        return self.campaign_seconds / computed if computed else 0.0


# ===== Campaign report =====


class CampaignReport(BaseModel):
    """Aggregated result of one FI or AxC campaign."""

    schema_version: int = REPORT_SCHEMA_VERSION
    kind: Literal["fi", "axc"]
    mode_label: str
    config: CampaignConfig
    config_hash: str
    compromised_layer: int
    measured_layer: int | None = Field(
        default=None, description="Layer holding the neuron peaks (compromised layer when None)"
    )
    path: Literal["float", "quant"]

    dataset_name: str
    dataset_checksum: str
    dataset_size: int

    golden_accuracy: float
    mode_accuracy: float
    accuracy_drop: float
    repetition_accuracies: list[float] = Field(default_factory=list)

    outcomes: list[FaultOutcome] = Field(default_factory=list)
    evaluated_faults: int
    class_counts: dict[FaultClass, int]
    layer_summaries: list[LayerErrorSummary] = Field(default_factory=list)
    masked_depth: MaskedDepthSummary

    runtime: RuntimeStats = Field(default_factory=RuntimeStats)
    created_at: str = Field(default_factory=utc_now)

    @model_validator(mode="after")
    def validate_totals(self) -> "CampaignReport":
        if sum(self.class_counts.values()) != self.evaluated_faults:
            raise ValueError(
                f"Class counts sum to {sum(self.class_counts.values())}, "
                f"expected {self.evaluated_faults}"
            )
        if abs(self.accuracy_drop - (self.golden_accuracy - self.mode_accuracy)) > 1e-12:
            raise ValueError("accuracy_drop must equal golden_accuracy - mode_accuracy")
        return self

    def summary(self, layer: int | None = None) -> LayerErrorSummary:
        """Summary of ``layer`` (the compromised layer by default)."""
        layer = self.compromised_layer if layer is None else layer
        for entry in self.layer_summaries:
            if entry.layer == layer:
                return entry
        raise CampaignError(f"Report has no summary for layer {layer}")

    @property
    def peak_layer(self) -> int:
        return self.compromised_layer if self.measured_layer is None else self.measured_layer

    def neuron_peaks(self) -> np.ndarray:
        """Per-neuron peak normalized errors at the measured layer."""
        return np.asarray(self.summary(self.peak_layer).neuron_peaks, dtype=np.float64)

    def metric_values(self, metric: str, fault_class: FaultClass | None = None) -> list[float]:
        """One metric over all outcomes (optionally of one class).

        ``metric`` is ``max_difference``, ``psnr_db``, ``ssim`` or ``depth``.
        """
        values = []
        for outcome in self.outcomes:
            if fault_class is not None and outcome.fault_class != fault_class:
                continue
            if metric == "depth":
                values.append(float(outcome.depth))
            else:
                values.append(float(getattr(outcome.metrics, metric)))
        return values


# ===== Derived results =====


class ProtectionComparison(BaseModel):
    """Neurons an FI campaign and an AxC campaign would recommend protecting."""

    threshold: float
    layer: int
    reference: list[int] = Field(description="Neuron indices flagged by FI")
    candidate: list[int] = Field(description="Neuron indices flagged by the AxC mode")
    recall: float = Field(ge=0.0, le=1.0)
    jaccard: float = Field(ge=0.0, le=1.0)
    neuron_count: int
    reference_peaks: list[JsonFloat]
    candidate_peaks: list[JsonFloat]
    reference_label: str = ""
    candidate_label: str = ""


class Histogram(BaseModel):
    """Binned counts; non-finite and out-of-range values are tallied apart."""

    edges: list[float]
    counts: list[int]
    sentinel: int = Field(default=0, description="Non-finite values")
    out_of_range: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts) + self.sentinel + self.out_of_range


class LayerOverhead(BaseModel):
    """Metric cost relative to one layer's forward time."""

    layer: int
    kind: str
    numel: int
    forward_seconds: float
    metric_seconds: dict[str, float]
    overhead_pct: dict[str, float]
    overhead_pct_std: dict[str, float]


class MetricOverheadReport(BaseModel):
    path: Literal["float", "quant"]
    images: int
    repeats: int
    layers: list[LayerOverhead]


class SweepEntry(BaseModel):
    name: str
    accuracy: float
    accuracy_loss: float
    mae_pct: float
    awce_pct: float
    mre_pct: float


class SweepReport(BaseModel):
    """Coarse-grain deployment of several multipliers on one model."""

    exact_accuracy: float
    dataset_size: int
    entries: list[SweepEntry]
    spearman_mae_loss: float | None = Field(
        default=None, description="Rank correlation of MAE and accuracy loss"
    )
    spearman_pvalue: float | None = None


# ===== Run manifest =====


class RunManifest(BaseModel):
    """Everything needed to repeat a CLI run: command, seeds, versions and checksums."""

    command: str
    argv: list[str]
    config_path: str | None = None
    config_hash: str | None = None
    seeds: dict[str, int] = Field(default_factory=dict)
    versions: dict[str, str] = Field(default_factory=dict)
    input_checksums: dict[str, str] = Field(
        default_factory=dict, description="SHA-256 of every input file, keyed by path"
    )
    outputs: dict[str, str] = Field(default_factory=dict, description="Artifact name to path")
    created_at: str = Field(default_factory=utc_now)

    def output(self, name: str, base: str | Path) -> Path:
        """Path of output ``name``, relative paths resolved against ``base``."""
        if name not in self.outputs:
            raise CampaignError(f"Run manifest lists no {name!r} output")
        path = Path(self.outputs[name])
        return path if path.is_absolute() else Path(base) / path


# ===== Persistence =====


def save_report(report: BaseModel, path: str | Path) -> Path:
    """Write any report model as indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    logger.info(f"Wrote {type(report).__name__} to {path}")
    return path


def load_report(path: str | Path) -> CampaignReport:
    """Read a campaign report written by :func:`save_report`.

    Raises:
        CampaignError: If the file is not a campaign report of a known schema
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CampaignError(f"{path}: invalid JSON: {e}") from e
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != REPORT_SCHEMA_VERSION:
        raise CampaignError(f"{path}: unsupported report schema version {version}")
    try:
        return CampaignReport.model_validate(data)
    except ValidationError as e:
        raise CampaignError(f"{path}: not a campaign report: {e}") from e


def write_outcomes_csv(report: CampaignReport, path: str | Path) -> Path:
    """One row per outcome: fault id, class, max difference, PSNR, SSIM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(OUTCOME_CSV_HEADER)
        for outcome in report.outcomes:
            writer.writerow(
                [outcome.fault_id, outcome.fault_class.value, *outcome.metrics.csv_fields()]
            )
    return path


def write_histogram_csv(hist: Histogram, path: str | Path) -> Path:
    """Rows of (bin_left, bin_right, count)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTOGRAM_CSV_HEADER)
        for left, right, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            writer.writerow([encode_float(left), encode_float(right), count])
    return path


# ===== Resume checkpoints =====

CHECKPOINT_FILE = "campaign.json"
FAULTS_FILE = "faults.json"
OUTCOMES_FILE = "outcomes.jsonl"
PEAKS_FILE = "neuron_peaks.npy"


class CampaignCheckpoint:
    """Incremental campaign state in a run directory.

    ``outcomes.jsonl`` gets one line per completed work item. The running
    per-neuron peak errors are saved before each line is appended; a max
    reduction is idempotent, so an item replayed after an interruption leaves
    the peaks unchanged.
    """

    def __init__(self, run_dir: str | Path, config_hash: str):
        self.run_dir = Path(run_dir)
        self.config_hash = config_hash

    @property
    def outcomes_path(self) -> Path:
        return self.run_dir / OUTCOMES_FILE

    @property
    def peaks_path(self) -> Path:
        return self.run_dir / PEAKS_FILE

    @property
    def faults_path(self) -> Path:
        return self.run_dir / FAULTS_FILE

    def open(self) -> None:
        """Create the run directory or check it belongs to the same config.

        Raises:
            CampaignError: If the directory holds a campaign of another config
        """
        self.run_dir.mkdir(parents=True, exist_ok=True)
        marker = self.run_dir / CHECKPOINT_FILE
        if marker.exists():
            stored = json.loads(marker.read_text()).get("config_hash")
            if stored != self.config_hash:
                raise CampaignError(
                    f"{self.run_dir} holds campaign {stored}, not {self.config_hash}"
                )
        else:
            marker.write_text(json.dumps({"config_hash": self.config_hash}))

    def completed(self) -> dict[tuple[int, int], FaultOutcome]:
        """Outcomes recorded so far, keyed by (fault id, image index)."""
        done: dict[tuple[int, int], FaultOutcome] = {}
        if not self.outcomes_path.exists():
            return done
        kept: list[str] = []
        for line in self.outcomes_path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                outcome = FaultOutcome.model_validate_json(line)
            except ValidationError:
                # torn final line from an interrupted write
                logger.warning(f"Dropping unreadable line in {self.outcomes_path}")
                continue
            done[outcome.key] = outcome
            kept.append(line)
        # rewrite so later appends start on a fresh line
        self.outcomes_path.write_text("".join(f"{line}\n" for line in kept))
        return done

    def load_peaks(self) -> np.ndarray | None:
        if not self.peaks_path.exists():
            return None
        return np.load(self.peaks_path)

    def record(self, outcome: FaultOutcome, peaks: np.ndarray | None) -> None:
        if peaks is not None:
            tmp = self.peaks_path.with_suffix(".tmp.npy")
            np.save(tmp, peaks)
            os.replace(tmp, self.peaks_path)
        with open(self.outcomes_path, "a") as f:
            f.write(outcome.model_dump_json() + "\n")
