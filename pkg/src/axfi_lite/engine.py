"""Inference engine producing full layer traces.

``forward`` runs a model on one (C, H, W) input along the float32 path or the
int8 path. On the int8 path each Conv2D/Dense layer multiplies through the hook
its multiplier plan assigns (native integer multiply by default). Taps are
per-layer callables applied to a layer's OFM before the next layer consumes it;
they model OFM faults and the bit suppressor.

Taps receive a seed derived from (run seed, layer id), so a trace depends only
on (model, input, plan, taps, seed).
"""

import logging
from collections.abc import Callable, Mapping
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from axfi_lite import ops
from axfi_lite.exceptions import ConfigurationError, QuantizationError
from axfi_lite.layers import is_multiplying
from axfi_lite.model import NetworkModel
from axfi_lite.multipliers import NATIVE, Multiplier
from axfi_lite.tensors import QMAX, QuantTensor, quantize
from axfi_lite.utils import derive_seed

logger = logging.getLogger(__name__)

ExecPath = Literal["float", "quant"]
Ofm = np.ndarray | QuantTensor
Tap = Callable[[Ofm, int], Ofm]
MultiplierPlan = Mapping[int, Multiplier]


class LayerTrace(BaseModel):
    """Every layer's OFM plus the logits of one inference."""

    path: ExecPath
    ofms: list[Ofm]
    logits: np.ndarray
    prediction: int

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def real(self, layer: int) -> np.ndarray:
        """OFM of ``layer`` as float64 (dequantized on the quant path)."""
        ofm = self.ofms[layer]
        if isinstance(ofm, QuantTensor):
            return ofm.dequantize()
        return np.asarray(ofm, dtype=np.float64)


def predict(logits: np.ndarray) -> int:
    """Argmax with lowest-index tie-break."""
    return int(np.argmax(logits))


def coarse_plan(model: NetworkModel, mult: Multiplier) -> dict[int, Multiplier]:
    """The same multiplier in every multiplying layer."""
    return {idx: mult for idx in model.multiplying_layers()}


def fine_plan(model: NetworkModel, assignment: Mapping[int, Multiplier]) -> dict[int, Multiplier]:
    """Per-layer assignment, native multiply elsewhere."""
    validate_plan(model, assignment)
    return {idx: assignment.get(idx, NATIVE) for idx in model.multiplying_layers()}


def validate_plan(model: NetworkModel, plan: Mapping[int, Multiplier] | None) -> None:
    """Every planned layer must exist and multiply."""
    for idx in plan or {}:
        if not 0 <= idx < len(model.layers) or not is_multiplying(model.layers[idx]):
            raise ConfigurationError(f"Multiplier plan targets layer {idx}, which does not multiply")


def _validate_taps(model: NetworkModel, taps: Mapping[int, Tap] | None) -> None:
    for idx in taps or {}:
        if not 0 <= idx < len(model.layers):
            raise ConfigurationError(f"Tap targets unknown layer {idx}")


def _check_quant_ready(model: NetworkModel) -> None:
    if not model.is_quantized:
        raise QuantizationError("Model is not quantized; run quantize_model with calibration first")
    missing = [i for i in model.multiplying_layers() if i not in model.activation_scales]
    if missing:
        raise QuantizationError(f"Missing activation scales for layers {missing}")


def quantize_input(model: NetworkModel, x: np.ndarray) -> QuantTensor:
    """Quantize an input image at the model's input scale.

    Raises:
        QuantizationError: If ``x`` holds non-finite values
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise QuantizationError("Non-finite input rejected on the quant path")
    return quantize(x, model.input_scale)


def run_layer(
    model: NetworkModel, idx: int, x: Ofm, path: ExecPath, mult: Multiplier | None = None
) -> Ofm:
    """Execute layer ``idx`` on ``x``."""
    layer = model.layers[idx]
    match layer.kind:
        case "conv2d":
            if path == "quant":
                params = model.quant_weights[idx]
                return ops.conv2d(
                    x,
                    params.weight,
                    params.bias,
                    stride=layer.stride,
                    padding=layer.padding,
                    mult=mult,
                    output_scale=model.activation_scales[idx],
                )
            fparams = model.float_weights[idx]
            return ops.conv2d(
                x, fparams.weight, fparams.bias, stride=layer.stride, padding=layer.padding
            )
        case "dense":
            if path == "quant":
                params = model.quant_weights[idx]
                return ops.dense(
                    x,
                    params.weight,
                    params.bias,
                    mult=mult,
                    output_scale=model.activation_scales[idx],
                )
            fparams = model.float_weights[idx]
            return ops.dense(x, fparams.weight, fparams.bias)
        case "maxpool2d":
            return ops.maxpool2d(x, layer.k, layer.stride)
        case "relu":
            return ops.relu(x)
        case "flatten":
            return ops.flatten(x)
    raise ConfigurationError(f"Unsupported layer kind {layer.kind}")


def _run(
    model: NetworkModel,
    x: Ofm,
    start: int,
    prefix: list[Ofm],
    path: ExecPath,
    plan: Mapping[int, Multiplier] | None,
    taps: Mapping[int, Tap] | None,
    seed: int,
) -> LayerTrace:
    if path == "float" and plan and any(not m.is_exact for m in plan.values()):
        raise ConfigurationError("Approximate multipliers require the quant path")
    validate_plan(model, plan)
    _validate_taps(model, taps)

    ofms = list(prefix)
    current = x
    for idx in range(start, len(model.layers)):
        mult = (plan or {}).get(idx) if path == "quant" else None
        current = run_layer(model, idx, current, path, mult)
        if taps and idx in taps:
            current = taps[idx](current, derive_seed(seed, idx))
        ofms.append(current)

    last = ofms[-1]
    if isinstance(last, QuantTensor):
        logits = last.data.astype(np.int64)
    else:
        logits = np.asarray(last, dtype=np.float32)
    return LayerTrace(path=path, ofms=ofms, logits=logits, prediction=predict(logits))


def forward(
    model: NetworkModel,
    x: np.ndarray,
    path: ExecPath = "quant",
    plan: Mapping[int, Multiplier] | None = None,
    taps: Mapping[int, Tap] | None = None,
    seed: int = 0,
) -> LayerTrace:
    """Run one inference and record every OFM.

    Args:
        model: Network (quantized, with activation scales, for ``path="quant"``)
        x: (C, H, W) input with real values in [0, 1]
        path: ``"float"`` or ``"quant"``
        plan: Multiplier per multiplying layer (native multiply where absent)
        taps: Per-layer OFM hooks ``tap(ofm, seed) -> ofm``
        seed: Run seed from which every tap seed derives

    Returns:
        LayerTrace with one OFM per layer

    Raises:
        ConfigurationError: Invalid plan or taps
        QuantizationError: Non-finite input or unquantized model on the quant path
    """
    if path == "quant":
        _check_quant_ready(model)
        return _run(model, quantize_input(model, x), 0, [], path, plan, taps, seed)
    return _run(model, np.asarray(x, dtype=np.float32), 0, [], path, plan, taps, seed)


def forward_from(
    model: NetworkModel,
    x: np.ndarray,
    golden: LayerTrace,
    start_layer: int,
    plan: Mapping[int, Multiplier] | None = None,
    taps: Mapping[int, Tap] | None = None,
    seed: int = 0,
) -> LayerTrace:
    """Resume inference at ``start_layer`` from the OFMs of ``golden``.

    Layers before ``start_layer`` are taken from ``golden`` as-is, so the result
    equals a full :func:`forward` whenever nothing before ``start_layer`` is
    faulty, approximate or tapped.
    """
    if start_layer <= 0:
        return forward(model, x, golden.path, plan, taps, seed)
    if start_layer >= len(model.layers):
        raise ConfigurationError(f"start_layer {start_layer} beyond the last layer")
    if golden.path == "quant":
        _check_quant_ready(model)
    prefix = golden.ofms[:start_layer]
    return _run(model, prefix[-1], start_layer, prefix, golden.path, plan, taps, seed)


def calibrate_activations(model: NetworkModel, images: np.ndarray) -> dict[int, float]:
    """Per-layer output scales ``max |OFM| / 127`` of every multiplying layer.

    Args:
        model: Model with float weights
        images: (N, C, H, W) calibration inputs

    Returns:
        Mapping layer id -> scale (1.0 for a layer whose OFMs are all zero)
    """
    peaks = {idx: 0.0 for idx in model.multiplying_layers()}
    for image in images:
        trace = forward(model, image, path="float")
        for idx in peaks:
            peaks[idx] = max(peaks[idx], float(np.max(np.abs(trace.ofms[idx]))))
    scales = {}
    for idx, peak in peaks.items():
        if peak == 0.0 or not np.isfinite(peak):
            logger.warning(f"Layer {idx} calibration peak is {peak}; using scale 1.0")
            scales[idx] = 1.0
        else:
            scales[idx] = peak / QMAX
    logger.debug(f"Calibrated activation scales: {scales}")
    return scales
