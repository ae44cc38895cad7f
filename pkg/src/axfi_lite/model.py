"""Network model container, post-training quantization and manifest I/O.

A model is stored as a JSON manifest plus a sidecar binary blob. The blob holds
tensors concatenated in manifest order, little-endian: float tensors as
IEEE-754 float32, quantized weights as signed bytes, quantized biases as int32.
The manifest records each tensor's byte offset and length.
"""

import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from axfi_lite.exceptions import ConfigurationError, ManifestError, ShapeError
from axfi_lite.layers import (
    Conv2DSpec,
    DenseSpec,
    FlattenSpec,
    LayerSpec,
    MaxPool2DSpec,
    ReLUSpec,
    is_multiplying,
)
from axfi_lite.tensors import QMAX, QuantTensor, quantize, quantize_bias

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
DEFAULT_INPUT_SCALE = 1.0 / QMAX


class LayerParams(BaseModel):
    """Float32 weight and bias of one multiplying layer."""

    weight: np.ndarray
    bias: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class QuantLayerParams(BaseModel):
    """Quantized weight and int32 bias (at scale_in * scale_w) of one layer."""

    weight: QuantTensor
    bias: np.ndarray | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class NetworkModel(BaseModel):
    """Ordered layer list plus float and (derived) quantized parameters.

    Layer ids are positions in ``layers``; parameters are keyed by layer id.
    """

    name: str = "model"
    input_shape: tuple[int, int, int]
    num_classes: int = Field(gt=0)
    layers: list[LayerSpec]
    float_weights: dict[int, LayerParams]
    quant_weights: dict[int, QuantLayerParams] | None = None
    input_scale: float = Field(default=DEFAULT_INPUT_SCALE, gt=0.0)
    activation_scales: dict[int, float] = Field(default_factory=dict)
    metadata: dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def validate_structure(self) -> "NetworkModel":
        """Shapes chain and every multiplying layer (only) carries parameters."""
        shapes = self.output_shapes()
        if shapes and shapes[-1] != (self.num_classes,):
            raise ShapeError(
                f"Final layer produces {shapes[-1]}, expected ({self.num_classes},) logits"
            )
        in_shapes = [tuple(self.input_shape), *shapes[:-1]]
        for idx, layer in enumerate(self.layers):
            if is_multiplying(layer):
                params = self.float_weights.get(idx)
                if params is None:
                    raise ConfigurationError(f"Layer {idx} ({layer.kind}) has no weights")
                expected = layer.weight_shape(in_shapes[idx])
                if tuple(params.weight.shape) != expected:
                    raise ShapeError(
                        f"Layer {idx} weight shape {params.weight.shape}, expected {expected}"
                    )
                if tuple(params.bias.shape) != (expected[0],):
                    raise ShapeError(f"Layer {idx} bias shape {params.bias.shape}")
            elif idx in self.float_weights:
                raise ConfigurationError(f"Layer {idx} ({layer.kind}) cannot carry weights")
        return self

    def output_shapes(self) -> list[tuple[int, ...]]:
        """Output shape of every layer, in order."""
        shape: tuple[int, ...] = tuple(self.input_shape)
        shapes = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def multiplying_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if is_multiplying(layer)]

    def layer_input_scales(self) -> dict[int, float]:
        """Activation scale entering each multiplying layer on the quant path."""
        scales = {}
        scale = self.input_scale
        for idx, layer in enumerate(self.layers):
            if is_multiplying(layer):
                scales[idx] = scale
                if idx not in self.activation_scales:
                    break
                scale = self.activation_scales[idx]
        return scales

    @property
    def is_quantized(self) -> bool:
        return self.quant_weights is not None and all(
            p.bias is not None for p in self.quant_weights.values()
        )

    def with_float_weights(self, updates: dict[int, LayerParams]) -> "NetworkModel":
        """Copy sharing every parameter except the replaced layers."""
        merged = {**self.float_weights, **updates}
        return self.model_copy(update={"float_weights": merged})

    def with_quant_weights(self, updates: dict[int, QuantLayerParams]) -> "NetworkModel":
        if self.quant_weights is None:
            raise ConfigurationError("Model has no quantized weights")
        merged = {**self.quant_weights, **updates}
        return self.model_copy(update={"quant_weights": merged})


def default_architecture(num_classes: int = 10) -> list[LayerSpec]:
    """Two conv, two max-pool and one fully-connected layer (28x28 inputs)."""
    return [
        Conv2DSpec(out_channels=8, kernel_h=5, kernel_w=5),
        ReLUSpec(),
        MaxPool2DSpec(k=2, stride=2),
        Conv2DSpec(out_channels=16, kernel_h=5, kernel_w=5),
        ReLUSpec(),
        MaxPool2DSpec(k=2, stride=2),
        FlattenSpec(),
        DenseSpec(out_features=num_classes),
    ]


def build_model(
    layers: list[LayerSpec],
    input_shape: tuple[int, int, int],
    num_classes: int,
    seed: int,
    name: str = "model",
) -> NetworkModel:
    """Randomly initialized model (He-normal weights, zero biases), deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    shape: tuple[int, ...] = tuple(input_shape)
    params = {}
    for idx, layer in enumerate(layers):
        if is_multiplying(layer):
            wshape = layer.weight_shape(shape)
            fan_in = int(np.prod(wshape[1:]))
            weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=wshape).astype(np.float32)
            params[idx] = LayerParams(weight=weight, bias=np.zeros(wshape[0], dtype=np.float32))
        shape = layer.output_shape(shape)
    return NetworkModel(
        name=name,
        input_shape=input_shape,
        num_classes=num_classes,
        layers=layers,
        float_weights=params,
    )


def quantize_model(model: NetworkModel, calibration: np.ndarray | None = None) -> NetworkModel:
    """Post-training symmetric per-tensor quantization.

    Weight scales are ``max|w| / 127`` (1.0 for an all-zero tensor). Activation
    scales come from ``calibration`` images when given, otherwise the model's
    existing ones are kept; biases are quantized at ``scale_in * scale_w`` once
    the layer's input scale is known.

    Args:
        model: Model with finite float weights
        calibration: Optional (N, C, H, W) images for activation scales

    Returns:
        New model with ``quant_weights`` populated; idempotent
    """
    for idx, params in model.float_weights.items():
        if not (np.all(np.isfinite(params.weight)) and np.all(np.isfinite(params.bias))):
            raise ConfigurationError(f"Layer {idx} has non-finite float weights")

    if calibration is not None:
        # Import here to avoid circular imports
        from axfi_lite.engine import calibrate_activations

        model = model.model_copy(
            update={"activation_scales": calibrate_activations(model, calibration)}
        )

    in_scales = model.layer_input_scales()
    quant = {}
    for idx, params in model.float_weights.items():
        qweight = quantize(params.weight)
        bias = None
        if idx in in_scales:
            bias = quantize_bias(params.bias, in_scales[idx], qweight.scale)
        quant[idx] = QuantLayerParams(weight=qweight, bias=bias)
    return model.model_copy(update={"quant_weights": quant})


# ===== Manifest I/O =====


class TensorEntry(BaseModel):
    """Location of one tensor inside the weight blob."""

    layer: int
    role: Literal["weight", "bias", "qweight", "qbias"]
    dtype: Literal["float32", "int8", "int32"]
    shape: list[int]
    offset: int = Field(ge=0)
    length: int = Field(ge=0)
    scale: float | None = None


class ModelManifest(BaseModel):
    """JSON document describing a model and its weight blob."""

    schema_version: int = MANIFEST_SCHEMA_VERSION
    name: str
    input_shape: tuple[int, int, int]
    num_classes: int
    layers: list[LayerSpec]
    input_scale: float
    activation_scales: dict[int, float] = Field(default_factory=dict)
    blob: str
    tensors: list[TensorEntry]
    metadata: dict[str, Any] = Field(default_factory=dict)


_DTYPES = {"float32": "<f4", "int8": "i1", "int32": "<i4"}


def save_model(model: NetworkModel, manifest_path: str | Path) -> Path:
    """Write ``model`` as manifest JSON plus ``<stem>.bin`` blob; returns the blob path."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path = manifest_path.with_suffix(".bin")

    chunks: list[bytes] = []
    entries: list[TensorEntry] = []
    offset = 0

    def add(layer: int, role: str, dtype: str, arr: np.ndarray, scale: float | None = None):
        nonlocal offset
        data = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        entries.append(
            TensorEntry(
                layer=layer,
                role=role,
                dtype=dtype,
                shape=list(arr.shape),
                offset=offset,
                length=len(data),
                scale=scale,
            )
        )
        chunks.append(data)
        offset += len(data)

    for idx in sorted(model.float_weights):
        params = model.float_weights[idx]
        add(idx, "weight", "float32", params.weight)
        add(idx, "bias", "float32", params.bias)
    if model.quant_weights is not None:
        for idx in sorted(model.quant_weights):
            qparams = model.quant_weights[idx]
            add(idx, "qweight", "int8", qparams.weight.data, qparams.weight.scale)
            if qparams.bias is not None:
                add(idx, "qbias", "int32", qparams.bias)

    blob_path.write_bytes(b"".join(chunks))
    manifest = ModelManifest(
        name=model.name,
        input_shape=model.input_shape,
        num_classes=model.num_classes,
        layers=model.layers,
        input_scale=model.input_scale,
        activation_scales=model.activation_scales,
        blob=blob_path.name,
        tensors=entries,
        metadata=model.metadata,
    )
    manifest_path.write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Saved model {model.name!r} to {manifest_path} ({offset} blob bytes)")
    return blob_path


def load_model(manifest_path: str | Path) -> NetworkModel:
    """Read a manifest and its blob.

    Raises:
        ManifestError: Unsupported schema, missing blob or out-of-bounds tensor
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = ModelManifest.model_validate_json(manifest_path.read_text())
    except (OSError, ValueError) as e:
        raise ManifestError(f"Cannot read model manifest: {e}", path=manifest_path) from e

    if manifest.schema_version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(
            f"Unsupported manifest schema_version {manifest.schema_version}", path=manifest_path
        )

    blob_path = manifest_path.parent / manifest.blob
    if not blob_path.exists():
        raise ManifestError(f"Weight blob not found: {blob_path}", path=manifest_path)
    blob = blob_path.read_bytes()

    float_parts: dict[int, dict[str, np.ndarray]] = {}
    quant_parts: dict[int, dict[str, Any]] = {}
    for entry in manifest.tensors:
        dtype = np.dtype(_DTYPES[entry.dtype])
        expected = int(np.prod(entry.shape)) * dtype.itemsize
        if entry.length != expected or entry.offset + entry.length > len(blob):
            raise ManifestError(
                f"Tensor layer={entry.layer} role={entry.role} at offset {entry.offset} "
                f"length {entry.length} does not fit shape {entry.shape} / blob {len(blob)} bytes",
                path=manifest_path,
            )
        arr = np.frombuffer(blob, dtype=dtype, count=expected // dtype.itemsize, offset=entry.offset)
        arr = arr.reshape(entry.shape)
        match entry.role:
            case "weight":
                float_parts.setdefault(entry.layer, {})["weight"] = arr.astype(np.float32)
            case "bias":
                float_parts.setdefault(entry.layer, {})["bias"] = arr.astype(np.float32)
            case "qweight":
                if entry.scale is None:
                    raise ManifestError(
                        f"Quantized weight of layer {entry.layer} has no scale", path=manifest_path
                    )
                quant_parts.setdefault(entry.layer, {})["weight"] = QuantTensor(
                    data=arr.astype(np.int8), scale=entry.scale
                )
            case "qbias":
                quant_parts.setdefault(entry.layer, {})["bias"] = arr.astype(np.int32)

    try:
        float_weights = {idx: LayerParams(**parts) for idx, parts in float_parts.items()}
        quant_weights = (
            {idx: QuantLayerParams(**parts) for idx, parts in quant_parts.items()}
            if quant_parts
            else None
        )
    except ValueError as e:
        raise ManifestError(f"Incomplete layer parameters: {e}", path=manifest_path) from e

    return NetworkModel(
        name=manifest.name,
        input_shape=manifest.input_shape,
        num_classes=manifest.num_classes,
        layers=manifest.layers,
        float_weights=float_weights,
        quant_weights=quant_weights,
        input_scale=manifest.input_scale,
        activation_scales=manifest.activation_scales,
        metadata=manifest.metadata,
    )

