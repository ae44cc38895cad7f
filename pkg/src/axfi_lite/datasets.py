"""Labeled image datasets: MNIST IDX ingestion and a synthetic stand-in.

IDX layout (big-endian):
    images   int32 magic 0x00000803, int32 count, int32 rows, int32 cols, u8 pixels
    labels   int32 magic 0x00000801, int32 count, u8 labels

Element counts are always checked against the headers; short or overlong
payloads are errors, never silently truncated.
"""

import hashlib
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from axfi_lite.exceptions import (
    DatasetError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
)
from axfi_lite.tensors import QuantTensor, quantize
from axfi_lite.utils import make_rng

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class Dataset(BaseModel):
    """Images in [0, 1] with integer class labels.

    Example:
        ```python
        ds = load_mnist_idx("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
        small = ds.subset(200, seed=0)
        ```
    """

    images: np.ndarray = Field(description="(N, C, H, W) float32 in [0, 1]")
    labels: np.ndarray = Field(description="(N,) int64 class indices")
    name: str = "dataset"

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("images")
    def validate_images(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got shape {v.shape}")
        return v

    @field_validator("labels")
    def validate_labels(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64).reshape(-1)
        if v.size and v.min() < 0:
            raise ValueError("labels must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_lengths(self) -> "Dataset":
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        return self

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def checksum(self) -> str:
        """SHA-256 over image and label bytes."""
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.images).tobytes())
        sha.update(np.ascontiguousarray(self.labels).tobytes())
        return sha.hexdigest()

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.images.shape[1:])  # type: ignore[return-value]

    def subset(self, n: int | None, seed: int = 0) -> "Dataset":
        """Seed-pinned random subset of ``n`` samples, kept in original order."""
        if n is None or n >= len(self):
            return self
        if n < 0:
            raise DatasetError(f"Subset size must be >= 0, got {n}")
        indices = np.sort(make_rng(seed).permutation(len(self))[:n])
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            name=f"{self.name}[{n}@{seed}]",
        )

    def quantized(self, scale: float) -> QuantTensor:
        """All images quantized at ``scale``."""
        return quantize(self.images, scale)

    def check_classes(self, num_classes: int) -> None:
        if len(self) and int(self.labels.max()) >= num_classes:
            raise DatasetError(
                f"Label {int(self.labels.max())} out of range for {num_classes} classes"
            )


# ===== IDX files =====


def _read_idx(path: Path, magic: int, header_ints: int) -> tuple[list[int], bytes]:
    raw = path.read_bytes()
    header_bytes = 4 * header_ints
    if len(raw) < 4:
        raise IdxTruncatedError(
            f"{path}: file too short for an IDX header", path, expected_bytes=4, found_bytes=len(raw)
        )
    (found,) = struct.unpack(">i", raw[:4])
    if found != magic:
        raise IdxMagicError(
            f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}", path, found=found, expected=magic
        )
    if len(raw) < header_bytes:
        raise IdxTruncatedError(
            f"{path}: header needs {header_bytes} bytes, file has {len(raw)}",
            path,
            expected_bytes=header_bytes,
            found_bytes=len(raw),
        )
    header = list(struct.unpack(f">{header_ints}i", raw[:header_bytes]))
    if any(dim < 0 for dim in header[1:]):
        raise DatasetError(f"{path}: negative dimension in IDX header {header[1:]}", path)
    payload = raw[header_bytes:]
    expected = int(np.prod(header[1:], dtype=np.int64))
    if len(payload) < expected:
        raise IdxTruncatedError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}",
            path,
            expected_bytes=header_bytes + expected,
            found_bytes=len(raw),
        )
    if len(payload) > expected:
        raise DatasetError(
            f"{path}: {len(payload) - expected} trailing bytes after the declared payload", path
        )
    return header, payload


def load_mnist_idx(
    images_path: str | Path, labels_path: str | Path, name: str | None = None
) -> Dataset:
    """Parse an IDX image file and its label file.

    Raises:
        IdxMagicError: A file carries the wrong magic number
        IdxTruncatedError: A payload is shorter than its header declares
        IdxCountMismatchError: The files disagree on the item count
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    (_, count, rows, cols), pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 4)
    (_, label_count), label_bytes = _read_idx(labels_path, IDX_LABELS_MAGIC, 2)
    if count != label_count:
        raise IdxCountMismatchError(
            f"{images_path.name} holds {count} images, {labels_path.name} {label_count} labels",
            images=count,
            labels=label_count,
        )
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, 1, rows, cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8)
    logger.info(f"Loaded {count} images of {rows}x{cols} from {images_path}")
    return Dataset(
        images=images.astype(np.float32) / np.float32(255.0),
        labels=labels.astype(np.int64),
        name=name or images_path.stem,
    )


def write_idx(
    images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path
) -> None:
    """Write images (N, H, W) or (N, 1, H, W) and labels as IDX files.

    Float images are taken as [0, 1] and scaled to bytes; uint8 images are
    written as-is.
    """
    images = np.asarray(images)
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise DatasetError(f"IDX images are single-channel, got shape {images.shape}")
        images = images[:, 0]
    if images.ndim != 3:
        raise DatasetError(f"IDX images must be (N, H, W), got shape {images.shape}")
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    labels = np.asarray(labels).astype(np.uint8).reshape(-1)

    n, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">4i", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">2i", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


# ===== Synthetic data =====


def make_bars_dataset(n: int, seed: int = 0, size: int = 28, noise: float = 0.05) -> Dataset:
    """Two-class images: a horizontal bar (class 0) or a vertical bar (class 1).

    Each bar is three pixels thick at a random offset, over uniform noise.
    """
    rng = make_rng(seed)
    labels = rng.integers(0, 2, size=n)
    offsets = rng.integers(2, size - 5, size=n)
    images = rng.uniform(0.0, noise, size=(n, 1, size, size)).astype(np.float32)
    for i in range(n):
        lo, hi = offsets[i], offsets[i] + 3
        if labels[i] == 0:
            images[i, 0, lo:hi, 2:-2] = 1.0
        else:
            images[i, 0, 2:-2, lo:hi] = 1.0
    return Dataset(images=images, labels=labels, name=f"bars-{n}-{seed}")
