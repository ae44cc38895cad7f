"""Layer specifications for feed-forward CNNs.

Each layer kind is a small pydantic model tagged by a ``kind`` literal, so a
list of layers round-trips through the model manifest JSON unchanged.
"""

from collections.abc import Sequence
from typing import Annotated, Literal

from pydantic import BaseModel, Field

from axfi_lite.exceptions import ShapeError


class Conv2DSpec(BaseModel):
    """2-D convolution, weights shaped (out_channels, in_channels, kernel_h, kernel_w)."""

    kind: Literal["conv2d"] = "conv2d"
    out_channels: int = Field(gt=0)
    kernel_h: int = Field(gt=0)
    kernel_w: int = Field(gt=0)
    stride: int = Field(default=1, gt=0)
    padding: int = Field(default=0, ge=0)

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(shape) != 3:
            raise ShapeError(f"conv2d expects a (C, H, W) input, got {shape}")
        _, h, w = shape
        oh = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"conv2d kernel {self.kernel_h}x{self.kernel_w} too large for {shape}")
        return (self.out_channels, oh, ow)

    def weight_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return (self.out_channels, shape[0], self.kernel_h, self.kernel_w)


class MaxPool2DSpec(BaseModel):
    """Max pooling over k x k windows."""

    kind: Literal["maxpool2d"] = "maxpool2d"
    k: int = Field(gt=0)
    stride: int = Field(gt=0)

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(shape) != 3:
            raise ShapeError(f"maxpool2d expects a (C, H, W) input, got {shape}")
        c, h, w = shape
        oh = (h - self.k) // self.stride + 1
        ow = (w - self.k) // self.stride + 1
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"maxpool2d window {self.k} too large for {shape}")
        return (c, oh, ow)


class DenseSpec(BaseModel):
    """Fully-connected layer, weights shaped (out_features, in_features)."""

    kind: Literal["dense"] = "dense"
    out_features: int = Field(gt=0)

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {shape}; add a flatten layer")
        return (self.out_features,)

    def weight_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return (self.out_features, shape[0])


class ReLUSpec(BaseModel):
    """Elementwise max(0, x)."""

    kind: Literal["relu"] = "relu"

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape


class FlattenSpec(BaseModel):
    """Row-major flatten to a vector."""

    kind: Literal["flatten"] = "flatten"

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        n = 1
        for d in shape:
            n *= d
        return (n,)


LayerSpec = Annotated[
    Conv2DSpec | MaxPool2DSpec | DenseSpec | ReLUSpec | FlattenSpec,
    Field(discriminator="kind"),
]

MULTIPLYING_KINDS = frozenset({"conv2d", "dense"})


def is_multiplying(layer: "Conv2DSpec | MaxPool2DSpec | DenseSpec | ReLUSpec | FlattenSpec") -> bool:
    """True for layers whose multiplications route through a multiplier hook."""
    return layer.kind in MULTIPLYING_KINDS


def stage_ids(
    layers: "Sequence[Conv2DSpec | MaxPool2DSpec | DenseSpec | ReLUSpec | FlattenSpec]",
) -> list[int]:
    """Stage index of every layer.

    A stage opens at each Conv2D/Dense layer and keeps the activation, pooling
    and flatten layers that follow it, so ``conv - relu - pool`` is one stage.
    Layers ahead of the first multiplying layer join stage 0.

    Example:
        ```python
        stage_ids([Conv2DSpec(...), ReLUSpec(), MaxPool2DSpec(k=2), FlattenSpec(), DenseSpec(...)])
        # [0, 0, 0, 0, 1]
        ```
    """
    ids = []
    stage = 0
    seen = False
    for layer in layers:
        if is_multiplying(layer):
            stage += 1 if seen else 0
            seen = True
        ids.append(stage)
    return ids
