"""Bit-flip fault models for weights and OFMs.

Faults are immutable descriptors. Applying a weight fault returns a
copy-on-write model: only the addressed layer's tensor is copied, every other
parameter is shared with the golden model. OFM faults are applied through
engine taps so they can be re-sampled for every image.

Rate-mode flip counts use ``floor(rate * bits)`` and positions are drawn
uniformly without replacement from a generator keyed by the descriptor seed.
"""

import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, model_validator

from axfi_lite.exceptions import FaultDescriptorError, SamplingError
from axfi_lite.layers import is_multiplying
from axfi_lite.model import LayerParams, NetworkModel, QuantLayerParams
from axfi_lite.tensors import QuantTensor
from axfi_lite.utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

FaultSite = Literal["weight_f32", "weight_i8", "ofm_i8"]
FaultMode = Literal["single", "rate"]

SITE_WIDTH: dict[str, int] = {"weight_f32": 32, "weight_i8": 8, "ofm_i8": 8}
_UINT_FOR_WIDTH = {32: np.uint32, 8: np.uint8}


class FaultDescriptor(BaseModel):
    """One injectable fault.

    Example:
        ```python
        FaultDescriptor(site="weight_i8", layer_id=0, flat_index=12, bit=7)
        FaultDescriptor(site="weight_f32", layer_id=3, mode="rate", rate=0.1, seed=42)
        ```
    """

    fault_id: int = Field(default=0, ge=0, description="Position in the campaign fault list")
    site: FaultSite
    layer_id: int = Field(ge=0)
    flat_index: int | None = Field(default=None, ge=0)
    bit: int | None = Field(default=None, ge=0)
    mode: FaultMode = "single"
    rate: float | None = Field(default=None, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def validate_mode(self) -> "FaultDescriptor":
        """Single faults need an index and an in-width bit; rate faults need a rate."""
        if self.mode == "single":
            if self.flat_index is None or self.bit is None:
                raise ValueError("single faults need flat_index and bit")
            if self.bit >= SITE_WIDTH[self.site]:
                raise ValueError(
                    f"bit {self.bit} outside the {SITE_WIDTH[self.site]}-bit width of {self.site}"
                )
        elif self.rate is None:
            raise ValueError("rate faults need a rate in (0, 1]")
        return self

    @property
    def width(self) -> int:
        return SITE_WIDTH[self.site]


# ===== Bit flips =====


def flip_bit_f32(x: float, bit: int) -> np.float32:
    """XOR bit ``bit`` (31 = sign) of the IEEE-754 pattern of ``x``; may return inf/NaN."""
    if not 0 <= bit <= 31:
        raise FaultDescriptorError(f"float32 bit {bit} outside 0-31")
    pattern = np.array([x], dtype=np.float32).view(np.uint32)
    pattern ^= np.uint32(1 << bit)
    return pattern.view(np.float32)[0]


def flip_bit_i8(x: int, bit: int) -> int:
    """XOR bit ``bit`` (7 = sign) of the two's-complement byte of ``x``."""
    if not 0 <= bit <= 7:
        raise FaultDescriptorError(f"int8 bit {bit} outside 0-7")
    flipped = (int(x) & 0xFF) ^ (1 << bit)
    return flipped - 256 if flipped >= 128 else flipped


def flip_bits(values: np.ndarray, flat_indices: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Copy of ``values`` (float32 or int8) with each (index, bit) pair flipped.

    Pairs must be distinct; several bits of one element may be flipped.
    """
    width = values.dtype.itemsize * 8
    utype = _UINT_FOR_WIDTH[width]
    raw = np.ascontiguousarray(values).reshape(-1).view(utype).copy()
    masks = np.zeros_like(raw)
    shifted = np.uint64(1) << np.asarray(bits, dtype=np.uint64)
    np.bitwise_or.at(masks, np.asarray(flat_indices, dtype=np.int64), shifted.astype(utype))
    raw ^= masks
    return raw.view(values.dtype).reshape(values.shape)


def rate_flip_count(rate: float, total_bits: int) -> int:
    """``floor(rate * total_bits)`` evaluated on the rate's exact decimal value."""
    return math.floor(Fraction(rate).limit_denominator(10**9) * total_bits)


def _sample_positions(total_bits: int, count: int, seed: int) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    return make_rng(seed).choice(total_bits, size=count, replace=False).astype(np.int64)


# ===== Weight faults =====


def _target_weight(model: NetworkModel, fault: FaultDescriptor) -> np.ndarray:
    if fault.site == "ofm_i8":
        raise FaultDescriptorError("OFM faults are applied through engine taps, not to weights")
    if not 0 <= fault.layer_id < len(model.layers) or not is_multiplying(
        model.layers[fault.layer_id]
    ):
        raise FaultDescriptorError(f"Layer {fault.layer_id} has no weights")
    if fault.site == "weight_f32":
        return model.float_weights[fault.layer_id].weight
    if model.quant_weights is None:
        raise FaultDescriptorError("weight_i8 faults need a quantized model")
    return model.quant_weights[fault.layer_id].weight.data


def validate_fault(model: NetworkModel, fault: FaultDescriptor) -> None:
    """Check ``fault`` addresses an existing scalar of ``model``."""
    if fault.site == "ofm_i8":
        if not 0 <= fault.layer_id < len(model.layers):
            raise FaultDescriptorError(f"Layer {fault.layer_id} does not exist")
        numel = int(np.prod(model.output_shapes()[fault.layer_id]))
    else:
        numel = _target_weight(model, fault).size
    if fault.mode == "single" and fault.flat_index >= numel:
        raise FaultDescriptorError(
            f"flat_index {fault.flat_index} outside layer {fault.layer_id} ({numel} elements)"
        )


def apply_weight_fault(model: NetworkModel, fault: FaultDescriptor) -> NetworkModel:
    """Faulty copy of ``model`` sharing every untouched parameter.

    Single mode flips one bit of one weight. Rate mode flips
    ``floor(rate * total_bits)`` distinct bits of the layer's weight tensor.

    Raises:
        FaultDescriptorError: If the descriptor does not fit the model
    """
    validate_fault(model, fault)
    weight = _target_weight(model, fault)

    if fault.mode == "single":
        indices = np.array([fault.flat_index])
        bits = np.array([fault.bit])
    else:
        total = weight.size * fault.width
        positions = _sample_positions(total, rate_flip_count(fault.rate, total), fault.seed)
        indices, bits = np.divmod(positions, fault.width)

    faulty = flip_bits(weight, indices, bits)
    logger.debug(f"Fault {fault.fault_id}: flipped {len(indices)} bits in layer {fault.layer_id}")

    if fault.site == "weight_f32":
        params = model.float_weights[fault.layer_id]
        return model.with_float_weights(
            {fault.layer_id: LayerParams(weight=faulty, bias=params.bias)}
        )
    qparams = model.quant_weights[fault.layer_id]
    return model.with_quant_weights(
        {
            fault.layer_id: QuantLayerParams(
                weight=qparams.weight.with_data(faulty), bias=qparams.bias
            )
        }
    )


# ===== OFM faults =====


def apply_ofm_fault(ofm: QuantTensor, rate: float, seed: int) -> QuantTensor:
    """Flip ``floor(rate * 8 * numel)`` distinct (element, bit) pairs of ``ofm``."""
    if not 0.0 < rate <= 1.0:
        raise FaultDescriptorError(f"OFM fault rate {rate} outside (0, 1]")
    total = ofm.numel * 8
    positions = _sample_positions(total, rate_flip_count(rate, total), seed)
    if positions.size == 0:
        return ofm
    indices, bits = np.divmod(positions, 8)
    return ofm.with_data(flip_bits(ofm.data, indices, bits))


def apply_ofm_single(ofm: QuantTensor, flat_index: int, bit: int) -> QuantTensor:
    """Flip one bit of one OFM element."""
    if not 0 <= flat_index < ofm.numel:
        raise FaultDescriptorError(f"OFM index {flat_index} outside {ofm.numel} elements")
    return ofm.with_data(flip_bits(ofm.data, np.array([flat_index]), np.array([bit])))


def ofm_rate_tap(rate: float):
    """Engine tap flipping a fresh random bit set of the OFM for every run seed."""

    def tap(ofm: QuantTensor, seed: int) -> QuantTensor:
        return apply_ofm_fault(ofm, rate, seed)

    return tap


def ofm_bit_tap(flat_index: int, bit: int):
    """Engine tap flipping one fixed OFM bit."""

    def tap(ofm: QuantTensor, seed: int) -> QuantTensor:
        return apply_ofm_single(ofm, flat_index, bit)

    return tap


def fault_tap(fault: FaultDescriptor):
    """Engine tap for an ``ofm_i8`` descriptor."""
    if fault.site != "ofm_i8":
        raise FaultDescriptorError(f"{fault.site} faults are not OFM taps")
    if fault.mode == "single":
        return ofm_bit_tap(fault.flat_index, fault.bit)
    return ofm_rate_tap(fault.rate)


# ===== Sampling =====


def bit_population(
    model: NetworkModel, site: FaultSite, layer: int | None = None
) -> list[tuple[int, int, int]]:
    """Injectable tensors as (layer id, element count, bit width).

    Weight sites cover the weight tensors of Conv2D/Dense layers (biases
    excluded); the OFM site covers the OFMs of Conv2D/Dense layers.
    """
    width = SITE_WIDTH[site]
    layers = model.multiplying_layers() if layer is None else [layer]
    shapes = model.output_shapes()
    population = []
    for idx in layers:
        if not 0 <= idx < len(model.layers) or not is_multiplying(model.layers[idx]):
            raise FaultDescriptorError(f"Layer {idx} is not a Conv2D/Dense layer")
        if site == "ofm_i8":
            numel = int(np.prod(shapes[idx]))
        elif site == "weight_f32":
            numel = model.float_weights[idx].weight.size
        else:
            if model.quant_weights is None:
                raise FaultDescriptorError("weight_i8 sampling needs a quantized model")
            numel = model.quant_weights[idx].weight.numel
        population.append((idx, numel, width))
    return population


def sample_single_faults(
    model: NetworkModel,
    site: FaultSite,
    n: int,
    master_seed: int,
    layer: int | None = None,
) -> list[FaultDescriptor]:
    """Draw ``n`` single-bit faults uniformly without replacement.

    Fault ``k`` gets ``fault_id=k`` and a seed derived from (master_seed, k);
    the list depends only on (model, site, n, master_seed, layer).

    Raises:
        SamplingError: If ``n`` exceeds the bit population
    """
    population = bit_population(model, site, layer)
    sizes = np.array([numel * width for _, numel, width in population], dtype=np.int64)
    total = int(sizes.sum())
    if n < 0 or n > total:
        raise SamplingError(f"Cannot draw {n} faults from a population of {total} bits")

    positions = _sample_positions(total, n, derive_seed(master_seed, 0xFA17))
    bounds = np.cumsum(sizes)
    which = np.searchsorted(bounds, positions, side="right")
    starts = bounds - sizes

    faults = []
    for k, (pos, tensor) in enumerate(zip(positions.tolist(), which.tolist())):
        layer_id, _, width = population[tensor]
        index, bit = divmod(pos - int(starts[tensor]), width)
        faults.append(
            FaultDescriptor(
                fault_id=k,
                site=site,
                layer_id=layer_id,
                flat_index=index,
                bit=bit,
                seed=derive_seed(master_seed, k),
            )
        )
    logger.info(f"Sampled {n} {site} faults from {total} bits (seed {master_seed})")
    return faults


_FAULT_LIST = TypeAdapter(list[FaultDescriptor])


def save_fault_list(faults: list[FaultDescriptor], path: str | Path) -> None:
    """Write descriptors as a JSON array."""
    Path(path).write_bytes(_FAULT_LIST.dump_json(faults, indent=2))


def load_fault_list(path: str | Path) -> list[FaultDescriptor]:
    """Read descriptors written by :func:`save_fault_list`."""
    return _FAULT_LIST.validate_json(Path(path).read_bytes())
