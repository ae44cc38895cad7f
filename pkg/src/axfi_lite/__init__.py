"""axfi-lite - approximate-computing and fault-injection workbench for int8 CNNs.

Runs a small quantized CNN with pluggable 8x8 multipliers, injects bit-flips
into weights or output feature maps, and compares both kinds of disturbance
with the same layer-level metrics (max difference, PSNR, SSIM, normalized
error, bitflip ratio).

Example:
    ```python
    from axfi_lite import (
        CampaignConfig, build_fixture_lut, characterize, load_model, run_axc_campaign,
    )

    print(characterize(build_fixture_lut("operand_truncate", 3)))

    cfg = CampaignConfig.from_file("configs/axmult_plus.json")
    report = run_axc_campaign(cfg)
    print(report.accuracy_drop, report.summary().max_error)
    ```
"""

__version__ = "0.1.0"

from .campaign import (
    GoldenRun,
    compare_campaigns,
    histogram,
    measure_metric_overhead,
    protection_set,
    run_axc_campaign,
    run_campaign,
    run_fi_campaign,
    run_golden,
    run_multiplier_sweep,
    threshold_for_size,
)
from .characterization import MultiplierErrorReport, characterize, product_error_map
from .datasets import Dataset, load_mnist_idx, make_bars_dataset, write_idx
from .engine import LayerTrace, coarse_plan, fine_plan, forward, forward_from
from .exceptions import (
    AxfiError,
    CampaignError,
    ComparisonError,
    ConfigurationError,
    DatasetError,
    EmptyDatasetError,
    FaultDescriptorError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    LUTFormatError,
    LUTLengthError,
    LUTMagicError,
    LUTRangeError,
    ManifestError,
    QuantizationError,
    SamplingError,
    ShapeError,
    TrainingDivergedError,
)
from .executors import CampaignExecutor, SerialExecutor, ThreadedExecutor, make_executor
from .faults import (
    FaultDescriptor,
    apply_ofm_fault,
    apply_ofm_single,
    apply_weight_fault,
    flip_bit_f32,
    flip_bit_i8,
    load_fault_list,
    sample_single_faults,
    save_fault_list,
)
from .layers import Conv2DSpec, DenseSpec, FlattenSpec, MaxPool2DSpec, ReLUSpec
from .metrics import (
    FaultClass,
    MetricRecord,
    bitflip_ratio,
    classify_fault,
    max_difference,
    normalized_error,
    propagation_depth,
    psnr,
    ssim,
)
from .model import NetworkModel, build_model, load_model, quantize_model, save_model
from .multipliers import (
    Multiplier,
    MultiplierLUT,
    build_exact_lut,
    build_fixture_lut,
    load_lut,
    lut_from_function,
    lut_multiply,
    save_lut,
)
from .options import (
    AxMultMode,
    AxMultPlusMode,
    CampaignConfig,
    FIMode,
    LutSource,
    SuppressorOnlyMode,
    SweepConfig,
)
from .reports import (
    CampaignReport,
    FaultOutcome,
    ProtectionComparison,
    RunManifest,
    load_report,
    save_report,
)
from .sampling import FaultSamplePlan, required_sample_size
from .suppressor import BitSuppressorConfig, suppress_bits
from .tensors import QuantTensor, quantize
from .training import train_fixture_model

__all__ = [
    # Version
    "__version__",
    # Model and inference
    "Conv2DSpec",
    "DenseSpec",
    "FlattenSpec",
    "MaxPool2DSpec",
    "ReLUSpec",
    "NetworkModel",
    "build_model",
    "quantize_model",
    "save_model",
    "load_model",
    "QuantTensor",
    "quantize",
    "LayerTrace",
    "forward",
    "forward_from",
    "coarse_plan",
    "fine_plan",
    # Multipliers
    "Multiplier",
    "MultiplierLUT",
    "build_exact_lut",
    "build_fixture_lut",
    "lut_from_function",
    "lut_multiply",
    "save_lut",
    "load_lut",
    "MultiplierErrorReport",
    "characterize",
    "product_error_map",
    "BitSuppressorConfig",
    "suppress_bits",
    # Faults
    "FaultDescriptor",
    "flip_bit_f32",
    "flip_bit_i8",
    "apply_weight_fault",
    "apply_ofm_fault",
    "apply_ofm_single",
    "sample_single_faults",
    "save_fault_list",
    "load_fault_list",
    "FaultSamplePlan",
    "required_sample_size",
    # Metrics
    "FaultClass",
    "MetricRecord",
    "max_difference",
    "psnr",
    "ssim",
    "normalized_error",
    "bitflip_ratio",
    "classify_fault",
    "propagation_depth",
    # Campaigns
    "CampaignConfig",
    "FIMode",
    "AxMultMode",
    "AxMultPlusMode",
    "SuppressorOnlyMode",
    "LutSource",
    "SweepConfig",
    "CampaignExecutor",
    "SerialExecutor",
    "ThreadedExecutor",
    "make_executor",
    "GoldenRun",
    "run_golden",
    "run_fi_campaign",
    "run_axc_campaign",
    "run_campaign",
    "compare_campaigns",
    "protection_set",
    "threshold_for_size",
    "histogram",
    "measure_metric_overhead",
    "run_multiplier_sweep",
    "CampaignReport",
    "FaultOutcome",
    "ProtectionComparison",
    "RunManifest",
    "save_report",
    "load_report",
    # Data and training
    "Dataset",
    "load_mnist_idx",
    "write_idx",
    "make_bars_dataset",
    "train_fixture_model",
    # Exceptions
    "AxfiError",
    "ConfigurationError",
    "ShapeError",
    "QuantizationError",
    "LUTFormatError",
    "LUTMagicError",
    "LUTLengthError",
    "LUTRangeError",
    "FaultDescriptorError",
    "SamplingError",
    "ComparisonError",
    "DatasetError",
    "IdxMagicError",
    "IdxCountMismatchError",
    "IdxTruncatedError",
    "EmptyDatasetError",
    "ManifestError",
    "CampaignError",
    "TrainingDivergedError",
]
