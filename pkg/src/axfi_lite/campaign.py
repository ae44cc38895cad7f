"""Golden runs, fault-injection and AxC-emulation campaigns.

A campaign is an ordered map over independent work items followed by a
deterministic reduction:

- FI single: fault ``k`` runs on image ``k mod |subset|``
- FI rate, weight site: repetition ``r`` builds one faulty model used for
  every image
- FI rate, OFM site: a fresh fault for every (repetition, image)
- AxC: one compromised inference per image

Each item's randomness derives from (master seed, item keys), so reports do
not depend on the executor or worker count. Faulty inferences resume from the
golden trace at the compromised layer; earlier layers are never recomputed.
"""

import logging
import os
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.stats import spearmanr

from axfi_lite.characterization import characterize
from axfi_lite.datasets import Dataset, load_mnist_idx
from axfi_lite.engine import (
    ExecPath,
    LayerTrace,
    MultiplierPlan,
    Tap,
    coarse_plan,
    forward,
    forward_from,
    quantize_input,
    run_layer,
)
from axfi_lite.exceptions import (
    ComparisonError,
    ConfigurationError,
    EmptyDatasetError,
)
from axfi_lite.executors import CampaignExecutor, make_executor
from axfi_lite.faults import (
    FaultDescriptor,
    apply_weight_fault,
    bit_population,
    fault_tap,
    load_fault_list,
    sample_single_faults,
    save_fault_list,
)
from axfi_lite.layers import is_multiplying, stage_ids
from axfi_lite.metrics import (
    FaultClass,
    bitflip_ratio,
    classify_fault,
    masked_depth_summary,
    max_difference,
    metric_record,
    normalized_error,
    propagation_depth,
    psnr,
    ssim,
)
from axfi_lite.model import NetworkModel, load_model, quantize_model
from axfi_lite.multipliers import MultiplierLUT
from axfi_lite.options import (
    AxMultMode,
    AxMultPlusMode,
    CampaignConfig,
    FIMode,
    SuppressorOnlyMode,
)
from axfi_lite.reports import (
    CampaignCheckpoint,
    CampaignReport,
    FaultOutcome,
    Histogram,
    LayerErrorSummary,
    LayerOverhead,
    MetricOverheadReport,
    ProtectionComparison,
    RuntimeStats,
    SweepEntry,
    SweepReport,
)
from axfi_lite.sampling import required_sample_size
from axfi_lite.suppressor import suppressor_tap
from axfi_lite.tensors import QuantTensor
from axfi_lite.utils import derive_seed

logger = logging.getLogger(__name__)

# Cache debug flag to avoid repeated environment variable lookups
_DEBUG = os.environ.get("AXFI_DEBUG", "false").lower() == "true"


# ===== Golden run =====


class GoldenRun(BaseModel):
    """Cached golden traces of a dataset and their top-1 accuracy."""

    traces: list[LayerTrace]
    labels: np.ndarray
    accuracy: float
    seconds: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def predictions(self) -> np.ndarray:
        return np.array([t.prediction for t in self.traces], dtype=np.int64)


def run_golden(
    model: NetworkModel,
    dataset: Dataset,
    path: ExecPath = "quant",
    executor: CampaignExecutor | None = None,
) -> GoldenRun:
    """Fault-free traces of every image plus top-1 accuracy.

    Raises:
        EmptyDatasetError: If the dataset holds no images
        DatasetError: If a label exceeds the model's class count
    """
    if len(dataset) == 0:
        raise EmptyDatasetError(f"Dataset {dataset.name!r} is empty")
    dataset.check_classes(model.num_classes)
    executor = executor or make_executor(1)
    start = time.perf_counter()
    traces = list(executor.map(lambda x: forward(model, x, path=path), dataset.images))
    predictions = np.array([t.prediction for t in traces], dtype=np.int64)
    golden = GoldenRun(
        traces=traces,
        labels=dataset.labels,
        accuracy=float(np.mean(predictions == dataset.labels)),
        seconds=time.perf_counter() - start,
    )
    logger.info(
        f"Golden run of {model.name} on {len(dataset)} images ({path}): "
        f"accuracy {golden.accuracy:.4f}"
    )
    return golden


# ===== Shared helpers =====


def load_inputs(cfg: CampaignConfig) -> tuple[NetworkModel, Dataset]:
    """Model and seed-pinned dataset subset named by ``cfg``."""
    if cfg.model_path is None or cfg.dataset_images is None or cfg.dataset_labels is None:
        raise ConfigurationError("Config needs model_path, dataset_images and dataset_labels")
    model = load_model(cfg.model_path)
    dataset = load_mnist_idx(cfg.dataset_images, cfg.dataset_labels)
    return model, dataset


def _prepare(
    cfg: CampaignConfig, model: NetworkModel | None, dataset: Dataset | None, path: ExecPath
) -> tuple[NetworkModel, Dataset]:
    if model is None or dataset is None:
        loaded_model, loaded_data = load_inputs(cfg)
        model = loaded_model if model is None else model
        dataset = loaded_data if dataset is None else dataset
    dataset = dataset.subset(cfg.subset_size, cfg.subset_seed)
    layers = (("compromised_layer", cfg.compromised_layer), ("measured_layer", cfg.peak_layer))
    for name, idx in layers:
        if not 0 <= idx < len(model.layers):
            raise ConfigurationError(f"{name} {idx} outside 0..{len(model.layers) - 1}")
    if path == "quant" and not model.is_quantized:
        logger.info("Model is not quantized; calibrating on the campaign subset")
        model = quantize_model(model, calibration=dataset.images)
    return model, dataset


def _layer_deltas(
    golden: LayerTrace, trace: LayerTrace
) -> tuple[list[float], list[float], list[float] | None]:
    means, peaks, flips = [], [], []
    for g, f in zip(golden.ofms, trace.ofms):
        ne = normalized_error(g, f)
        means.append(ne.mean)
        peaks.append(ne.peak)
        if isinstance(g, QuantTensor):
            flips.append(bitflip_ratio(g, f))
    return means, peaks, (flips if golden.path == "quant" else None)


def _outcome(
    cfg: CampaignConfig,
    golden: LayerTrace,
    trace: LayerTrace,
    label: int,
    fault_id: int,
    image_index: int,
    fault: FaultDescriptor | None,
    mode_tag: str,
    stages: list[int],
) -> tuple[FaultOutcome, np.ndarray]:
    layer = cfg.compromised_layer
    depth, flags = propagation_depth(golden, trace, layer, cfg.depth_eps, stages)
    means, peaks, flips = _layer_deltas(golden, trace)
    peak_layer = cfg.peak_layer
    neuron_errors = normalized_error(golden.ofms[peak_layer], trace.ofms[peak_layer])
    outcome = FaultOutcome(
        fault_id=fault_id,
        image_index=image_index,
        fault=fault,
        mode_tag=mode_tag,
        fault_class=classify_fault(golden.logits, trace.logits, cfg.eps),
        metrics=metric_record(golden.ofms[layer], trace.ofms[layer]),
        depth=depth,
        changed=flags,
        correct=trace.prediction == label,
        layer_mean_errors=means,
        layer_peak_errors=peaks,
        layer_bitflips=flips,
    )
    if _DEBUG:
        logger.debug(
            f"Item ({fault_id}, {image_index}): {outcome.fault_class.value}, depth {depth}, "
            f"max diff {outcome.metrics.max_difference:.4g}"
        )
    return outcome, neuron_errors.errors.reshape(-1)


def _open_checkpoint(cfg: CampaignConfig, run_dir: str | Path | None) -> CampaignCheckpoint | None:
    run_dir = Path(run_dir) if run_dir is not None else cfg.output_dir
    if run_dir is None:
        return None
    checkpoint = CampaignCheckpoint(run_dir, cfg.content_hash())
    checkpoint.open()
    return checkpoint


def _execute(
    cfg: CampaignConfig,
    items: Sequence[tuple[int, int]],
    evaluate,
    neuron_count: int,
    executor: CampaignExecutor | None,
    checkpoint: CampaignCheckpoint | None,
) -> tuple[list[FaultOutcome], np.ndarray, int]:
    """Map ``evaluate`` over (fault id, image) items, skipping checkpointed ones."""
    done: dict[tuple[int, int], FaultOutcome] = {}
    peaks = np.zeros(neuron_count, dtype=np.float64)
    if checkpoint is not None:
        done = checkpoint.completed()
        stored = checkpoint.load_peaks()
        if stored is not None and stored.shape == peaks.shape:
            peaks = stored.astype(np.float64)
        if done:
            logger.info(f"Resuming: {len(done)} of {len(items)} items already completed")

    todo = [item for item in items if item not in done]
    executor = executor or make_executor(cfg.workers, cfg.show_progress)
    for outcome, neuron_errors in executor.map(evaluate, todo):
        np.maximum(peaks, neuron_errors, out=peaks)
        done[outcome.key] = outcome
        if checkpoint is not None:
            checkpoint.record(outcome, peaks)

    outcomes = [done[item] for item in items]
    return outcomes, peaks, len(items) - len(todo)


def _summaries(
    model: NetworkModel,
    outcomes: list[FaultOutcome],
    measured_layer: int,
    neuron_peaks: np.ndarray,
) -> list[LayerErrorSummary]:
    summaries = []
    for idx, layer in enumerate(model.layers):
        means = [o.layer_mean_errors[idx] for o in outcomes]
        maxes = [o.layer_peak_errors[idx] for o in outcomes]
        flips = [o.layer_bitflips[idx] for o in outcomes if o.layer_bitflips is not None]
        changed = [o.changed[idx] for o in outcomes]
        summaries.append(
            LayerErrorSummary(
                layer=idx,
                kind=layer.kind,
                mean_error=float(np.mean(means)) if means else 0.0,
                max_error=float(np.max(maxes)) if maxes else 0.0,
                mean_bitflip_pct=float(np.mean(flips)) if flips else None,
                changed_fraction=float(np.mean(changed)) if changed else 0.0,
                neuron_peaks=neuron_peaks.tolist() if idx == measured_layer else [],
            )
        )
    return summaries


def _build_report(
    cfg: CampaignConfig,
    kind: str,
    model: NetworkModel,
    dataset: Dataset,
    golden: GoldenRun,
    path: ExecPath,
    outcomes: list[FaultOutcome],
    peaks: np.ndarray,
    repetition_accuracies: list[float],
    runtime: RuntimeStats,
) -> CampaignReport:
    counts = {cls: 0 for cls in FaultClass}
    for outcome in outcomes:
        counts[outcome.fault_class] += 1
    if repetition_accuracies:
        mode_accuracy = float(np.mean(repetition_accuracies))
    else:
        mode_accuracy = golden.accuracy
    masked = [o.depth for o in outcomes if o.fault_class == FaultClass.MASKED]
    return CampaignReport(
        kind=kind,
        mode_label=cfg.mode.label(),
        config=cfg,
        config_hash=cfg.content_hash(),
        compromised_layer=cfg.compromised_layer,
        measured_layer=cfg.peak_layer,
        path=path,
        dataset_name=dataset.name,
        dataset_checksum=dataset.checksum,
        dataset_size=len(dataset),
        golden_accuracy=golden.accuracy,
        mode_accuracy=mode_accuracy,
        accuracy_drop=golden.accuracy - mode_accuracy,
        repetition_accuracies=repetition_accuracies,
        outcomes=outcomes,
        evaluated_faults=len(outcomes),
        class_counts=counts,
        layer_summaries=_summaries(model, outcomes, cfg.peak_layer, peaks),
        masked_depth=masked_depth_summary(masked),
        runtime=runtime,
    )


def _neuron_count(model: NetworkModel, layer: int) -> int:
    return int(np.prod(model.output_shapes()[layer]))


# ===== Fault injection =====


def plan_fault_count(cfg: CampaignConfig, model: NetworkModel, subset_size: int) -> int:
    """Number of single faults: explicit, per image, or by statistical FI sizing."""
    if cfg.sample_size is not None:
        return cfg.sample_size
    if cfg.faults_per_image is not None:
        return cfg.faults_per_image * subset_size
    population = sum(
        numel * width
        for _, numel, width in bit_population(model, cfg.mode.site, cfg.compromised_layer)
    )
    return required_sample_size(
        population, cfg.margin_of_error, cfg.confidence, cfg.failure_probability
    )


def run_fi_campaign(
    cfg: CampaignConfig,
    model: NetworkModel | None = None,
    dataset: Dataset | None = None,
    executor: CampaignExecutor | None = None,
    run_dir: str | Path | None = None,
) -> CampaignReport:
    """Bit-flip fault-injection campaign at the compromised layer.

    Args:
        cfg: Config with an ``fi`` mode
        model: Model (loaded from ``cfg.model_path`` when None)
        dataset: Dataset before subsetting (loaded from ``cfg`` when None)
        executor: Work-item executor (``cfg.workers`` threads by default)
        run_dir: Checkpoint directory for resume (``cfg.output_dir`` when None)

    Returns:
        CampaignReport with one outcome per faulty inference

    Raises:
        ConfigurationError: Wrong mode or invalid layer
        FaultDescriptorError: Layer without injectable weights
    """
    mode = cfg.mode
    if not isinstance(mode, FIMode):
        raise ConfigurationError(f"run_fi_campaign needs an fi mode, got {mode.kind}")
    path: ExecPath = mode.path
    model, dataset = _prepare(cfg, model, dataset, path)
    layer = cfg.compromised_layer
    if not is_multiplying(model.layers[layer]):
        raise ConfigurationError(f"FI targets layer {layer}, which is not Conv2D/Dense")

    golden = run_golden(model, dataset, path)
    stages = stage_ids(model.layers)
    checkpoint = _open_checkpoint(cfg, run_dir)
    n_images = len(dataset)
    labels = dataset.labels
    start = time.perf_counter()

    if checkpoint is not None and checkpoint.faults_path.exists():
        faults = load_fault_list(checkpoint.faults_path)
    elif mode.fault_model == "single":
        faults = sample_single_faults(
            model, mode.site, plan_fault_count(cfg, model, n_images), cfg.master_seed, layer
        )
    else:
        repetitions = cfg.faults_per_image if cfg.faults_per_image is not None else 1
        faults = [
            FaultDescriptor(
                fault_id=r,
                site=mode.site,
                layer_id=layer,
                mode="rate",
                rate=mode.rate,
                seed=derive_seed(cfg.master_seed, r),
            )
            for r in range(repetitions)
        ]
    if checkpoint is not None:
        save_fault_list(faults, checkpoint.faults_path)

    if mode.fault_model == "single":
        items = [(f.fault_id, f.fault_id % n_images) for f in faults]
    else:
        items = [(f.fault_id, i) for f in faults for i in range(n_images)]

    # Weight rate faults persist across all images of a repetition
    faulty_models: dict[int, NetworkModel] = {}
    if mode.fault_model == "rate" and mode.site != "ofm_i8":
        faulty_models = {f.fault_id: apply_weight_fault(model, f) for f in faults}
    logger.info(f"FI campaign {mode.label()}: {len(faults)} faults, {len(items)} inferences")

    def evaluate(item: tuple[int, int]) -> tuple[FaultOutcome, np.ndarray]:
        fault_id, image = item
        fault = faults[fault_id]
        x = dataset.images[image]
        if mode.site == "ofm_i8":
            trace = forward_from(
                model,
                x,
                golden.traces[image],
                layer,
                taps={layer: fault_tap(fault)},
                seed=derive_seed(fault.seed, image),
            )
        else:
            fmodel = faulty_models.get(fault_id)
            if fmodel is None:
                fmodel = apply_weight_fault(model, fault)
            trace = forward_from(fmodel, x, golden.traces[image], layer)
        return _outcome(
            cfg,
            golden.traces[image],
            trace,
            int(labels[image]),
            fault_id,
            image,
            fault,
            mode.label(),
            stages,
        )

    outcomes, peaks, resumed = _execute(
        cfg, items, evaluate, _neuron_count(model, cfg.peak_layer), executor, checkpoint
    )

    if mode.fault_model == "single":
        accuracies = [float(np.mean([o.correct for o in outcomes]))] if outcomes else []
    else:
        accuracies = [
            float(np.mean([o.correct for o in outcomes if o.fault_id == f.fault_id]))
            for f in faults
        ]

    runtime = RuntimeStats(
        golden_seconds=golden.seconds,
        campaign_seconds=time.perf_counter() - start,
        items=len(items),
        resumed_items=resumed,
    )
    return _build_report(
        cfg, "fi", model, dataset, golden, path, outcomes, peaks, accuracies, runtime
    )


# ===== AxC emulation =====


def axc_plan_and_taps(
    cfg: CampaignConfig, model: NetworkModel, lut: MultiplierLUT | None = None
) -> tuple[MultiplierPlan, dict[int, Tap]]:
    """Multiplier plan and OFM taps for the compromised layer.

    The approximate unit acts on the compromised layer only; every other layer
    multiplies exactly.
    """
    mode = cfg.mode
    layer = cfg.compromised_layer
    plan: dict = {}
    taps: dict[int, Tap] = {}
    if isinstance(mode, (AxMultMode, AxMultPlusMode)):
        if not is_multiplying(model.layers[layer]):
            raise ConfigurationError(f"AxMult targets layer {layer}, which does not multiply")
        plan[layer] = lut if lut is not None else mode.lut.load()
    if isinstance(mode, (AxMultPlusMode, SuppressorOnlyMode)):
        taps[layer] = suppressor_tap(mode.suppressor)
    return plan, taps


def run_axc_campaign(
    cfg: CampaignConfig,
    model: NetworkModel | None = None,
    dataset: Dataset | None = None,
    executor: CampaignExecutor | None = None,
    run_dir: str | Path | None = None,
    lut: MultiplierLUT | None = None,
) -> CampaignReport:
    """Dual-trace AxC emulation: golden vs compromised inference per image.

    Args:
        cfg: Config with an ``axmult``, ``axmult_plus`` or ``suppressor`` mode
        model: Model (loaded from ``cfg.model_path`` when None)
        dataset: Dataset before subsetting (loaded from ``cfg`` when None)
        executor: Work-item executor
        run_dir: Checkpoint directory for resume
        lut: Preloaded table overriding ``cfg.mode.lut``

    Returns:
        CampaignReport with one outcome per image
    """
    if isinstance(cfg.mode, FIMode):
        raise ConfigurationError("run_axc_campaign needs an AxC mode, got fi")
    model, dataset = _prepare(cfg, model, dataset, "quant")
    layer = cfg.compromised_layer
    plan, taps = axc_plan_and_taps(cfg, model, lut)
    label = cfg.mode.label()

    golden = run_golden(model, dataset, "quant")
    stages = stage_ids(model.layers)
    checkpoint = _open_checkpoint(cfg, run_dir)
    labels = dataset.labels
    start = time.perf_counter()
    logger.info(f"AxC campaign {label} at layer {layer} on {len(dataset)} images")

    def evaluate(item: tuple[int, int]) -> tuple[FaultOutcome, np.ndarray]:
        _, image = item
        trace = forward_from(
            model,
            dataset.images[image],
            golden.traces[image],
            layer,
            plan=plan,
            taps=taps,
            seed=derive_seed(cfg.master_seed, image),
        )
        return _outcome(
            cfg, golden.traces[image], trace, int(labels[image]), image, image, None, label, stages
        )

    items = [(i, i) for i in range(len(dataset))]
    outcomes, peaks, resumed = _execute(
        cfg, items, evaluate, _neuron_count(model, cfg.peak_layer), executor, checkpoint
    )
    accuracy = float(np.mean([o.correct for o in outcomes]))
    runtime = RuntimeStats(
        golden_seconds=golden.seconds,
        campaign_seconds=time.perf_counter() - start,
        items=len(items),
        resumed_items=resumed,
    )
    return _build_report(
        cfg, "axc", model, dataset, golden, "quant", outcomes, peaks, [accuracy], runtime
    )


def run_campaign(cfg: CampaignConfig, **kwargs) -> CampaignReport:
    """Dispatch on the config's mode."""
    if cfg.is_fi:
        return run_fi_campaign(cfg, **kwargs)
    return run_axc_campaign(cfg, **kwargs)


# ===== Cross-method comparison =====


def protection_set(peaks: np.ndarray, threshold: float) -> set[int]:
    """Neuron indices whose peak normalized error exceeds ``threshold``."""
    return {int(i) for i in np.flatnonzero(np.asarray(peaks) > threshold)}


def threshold_for_size(peaks: np.ndarray, size: int) -> float:
    """Largest threshold flagging at least ``size`` neurons (ties may add more)."""
    ordered = np.sort(np.asarray(peaks, dtype=np.float64))[::-1]
    if size <= 0:
        return float(ordered[0]) if ordered.size else 0.0
    if size > ordered.size:
        raise ConfigurationError(f"Cannot flag {size} of {ordered.size} neurons")
    return float(np.nextafter(ordered[size - 1], -np.inf))


def compare_campaigns(
    fi_report: CampaignReport, axc_report: CampaignReport, threshold: float
) -> ProtectionComparison:
    """Recall and Jaccard index of the AxC protection set against the FI one.

    Raises:
        ComparisonError: If the reports measured different layers or layer sizes
    """
    if fi_report.compromised_layer != axc_report.compromised_layer:
        raise ComparisonError(
            f"Reports compromised layers {fi_report.compromised_layer} "
            f"and {axc_report.compromised_layer}"
        )
    if fi_report.peak_layer != axc_report.peak_layer:
        raise ComparisonError(
            f"Reports measured layers {fi_report.peak_layer} and {axc_report.peak_layer}"
        )
    ref_peaks = fi_report.neuron_peaks()
    cand_peaks = axc_report.neuron_peaks()
    if ref_peaks.shape != cand_peaks.shape:
        raise ComparisonError(
            f"Reports hold {ref_peaks.size} and {cand_peaks.size} neurons for the layer"
        )
    reference = protection_set(ref_peaks, threshold)
    candidate = protection_set(cand_peaks, threshold)
    union = reference | candidate
    both = reference & candidate
    recall = len(both) / len(reference) if reference else 1.0
    jaccard = len(both) / len(union) if union else 1.0
    logger.info(
        f"Protection sets at {threshold}: FI {len(reference)}, AxC {len(candidate)}, "
        f"recall {recall:.3f}"
    )
    return ProtectionComparison(
        threshold=threshold,
        layer=fi_report.peak_layer,
        reference=sorted(reference),
        candidate=sorted(candidate),
        recall=recall,
        jaccard=jaccard,
        neuron_count=int(ref_peaks.size),
        reference_peaks=ref_peaks.tolist(),
        candidate_peaks=cand_peaks.tolist(),
        reference_label=fi_report.mode_label,
        candidate_label=axc_report.mode_label,
    )


# ===== Distributions and overhead =====


def histogram(values: Sequence[float], bin_count: int, value_range: tuple[float, float]) -> Histogram:
    """Right-closed bins over ``value_range``; the first bin also holds its left edge.

    Example:
        ```python
        histogram([0.0, 0.5, 1.0], 2, (0.0, 1.0)).counts  # [2, 1]
        ```
    """
    if bin_count < 1:
        raise ConfigurationError(f"bin_count must be >= 1, got {bin_count}")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ConfigurationError(f"Invalid histogram range ({lo}, {hi})")
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    finite = np.isfinite(arr)
    inside = finite & (arr >= lo) & (arr <= hi)
    edges = np.linspace(lo, hi, bin_count + 1)
    idx = np.clip(np.searchsorted(edges, arr[inside], side="left") - 1, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    return Histogram(
        edges=edges.tolist(),
        counts=counts.tolist(),
        sentinel=int((~finite).sum()),
        out_of_range=int((finite & ~inside).sum()),
    )


_METRICS = {"max_difference": max_difference, "psnr": psnr, "ssim": ssim}


def _layer_input(model: NetworkModel, image: np.ndarray, path: ExecPath):
    if path == "quant":
        return quantize_input(model, image)
    return np.asarray(image, dtype=np.float32)


def measure_metric_overhead(
    model: NetworkModel,
    images: np.ndarray,
    path: ExecPath = "quant",
    repeats: int = 3,
) -> MetricOverheadReport:
    """Cost of each metric relative to each layer's forward time, in percent.

    Every repeat times the layers and metrics over all ``images``; the report
    gives the mean and standard deviation of the overhead across repeats.
    Values depend on the host and are reported, not checked.

    Raises:
        EmptyDatasetError: If ``images`` is empty
    """
    if len(images) == 0:
        raise EmptyDatasetError("Overhead measurement needs at least one image")
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if path == "quant" and not model.is_quantized:
        raise ConfigurationError("Quant-path overhead needs a quantized model")
    traces = [forward(model, x, path=path) for x in images]
    n_layers = len(model.layers)
    shapes = model.output_shapes()
    fwd = np.zeros((repeats, n_layers))
    cost = {name: np.zeros((repeats, n_layers)) for name in _METRICS}

    for r in range(repeats):
        for image, trace in zip(images, traces):
            x = _layer_input(model, image, path)
            for idx in range(n_layers):
                t0 = time.perf_counter()
                run_layer(model, idx, x, path)
                fwd[r, idx] += time.perf_counter() - t0
                ofm = trace.ofms[idx]
                for name, fn in _METRICS.items():
                    if name == "ssim" and int(np.prod(shapes[idx])) < 2:
                        continue
                    t0 = time.perf_counter()
                    fn(ofm, ofm)
                    cost[name][r, idx] += time.perf_counter() - t0
                x = ofm

    layers = []
    for idx, layer in enumerate(model.layers):
        pct = {name: 100.0 * cost[name][:, idx] / np.maximum(fwd[:, idx], 1e-12) for name in cost}
        layers.append(
            LayerOverhead(
                layer=idx,
                kind=layer.kind,
                numel=int(np.prod(shapes[idx])),
                forward_seconds=float(fwd[:, idx].mean() / len(images)),
                metric_seconds={n: float(cost[n][:, idx].mean() / len(images)) for n in cost},
                overhead_pct={n: float(v.mean()) for n, v in pct.items()},
                overhead_pct_std={n: float(v.std()) for n, v in pct.items()},
            )
        )
    logger.info(f"Measured metric overhead over {len(images)} images x {repeats} repeats ({path})")
    return MetricOverheadReport(path=path, images=len(images), repeats=repeats, layers=layers)


# ===== Multiplier sweep =====


def accuracy_with_plan(
    model: NetworkModel,
    dataset: Dataset,
    plan: MultiplierPlan | None,
    executor: CampaignExecutor | None = None,
) -> float:
    """Quant-path top-1 accuracy under a multiplier plan."""
    executor = executor or make_executor(1)
    preds = list(executor.map(lambda x: forward(model, x, plan=plan).prediction, dataset.images))
    return float(np.mean(np.asarray(preds) == dataset.labels))


def run_multiplier_sweep(
    model: NetworkModel,
    dataset: Dataset,
    luts: Sequence[MultiplierLUT],
    executor: CampaignExecutor | None = None,
) -> SweepReport:
    """Deploy each LUT in every multiplying layer and rank accuracy loss by MAE."""
    if len(dataset) == 0:
        raise EmptyDatasetError(f"Dataset {dataset.name!r} is empty")
    exact = accuracy_with_plan(model, dataset, None, executor)
    entries = []
    for lut in luts:
        report = characterize(lut)
        accuracy = accuracy_with_plan(model, dataset, coarse_plan(model, lut), executor)
        entries.append(
            SweepEntry(
                name=lut.name,
                accuracy=accuracy,
                accuracy_loss=exact - accuracy,
                mae_pct=report.mae_pct,
                awce_pct=report.awce_pct,
                mre_pct=report.mre_pct,
            )
        )
        logger.info(f"Sweep {lut.name}: accuracy {accuracy:.4f}, MAE {report.mae_pct:.3f}%")

    rho = pvalue = None
    maes = [e.mae_pct for e in entries]
    losses = [e.accuracy_loss for e in entries]
    if len(entries) >= 3 and np.ptp(maes) > 0 and np.ptp(losses) > 0:
        result = spearmanr(maes, losses)
        rho, pvalue = float(result[0]), float(result[1])
    return SweepReport(
        exact_accuracy=exact,
        dataset_size=len(dataset),
        entries=entries,
        spearman_mae_loss=rho,
        spearman_pvalue=pvalue,
    )
