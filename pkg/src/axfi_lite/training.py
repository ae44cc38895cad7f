"""Minimal fixture trainer: mini-batch SGD with cross-entropy on the float path.

Only the layer kinds the engine runs are supported (Conv2D, Dense, MaxPool2D,
ReLU, Flatten). Everything is deterministic in the seed: weight init, the
train/test split and the per-epoch shuffle all derive from it.
"""

import logging
from pathlib import Path
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field

from axfi_lite.datasets import Dataset
from axfi_lite.exceptions import EmptyDatasetError, TrainingDivergedError
from axfi_lite.layers import LayerSpec
from axfi_lite.model import (
    LayerParams,
    NetworkModel,
    build_model,
    default_architecture,
    quantize_model,
    save_model,
)
from axfi_lite.ops import im2col
from axfi_lite.utils import make_rng

logger = logging.getLogger(__name__)

CALIBRATION_IMAGES = 256


class TrainingConfig(BaseModel):
    """Hyper-parameters of :func:`train_fixture_model`."""

    epochs: int = Field(default=3, ge=0)
    seed: int = Field(default=0, ge=0)
    learning_rate: float = Field(default=0.02, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(default=32, gt=0)
    test_fraction: float = Field(
        default=0.2, gt=0.0, lt=1.0, description="Held-out share for test accuracy"
    )


# ===== Batched layer passes =====


def _conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, layer) -> tuple:
    b = x.shape[0]
    o, _, kh, kw = weight.shape
    cols = im2col(x, kh, kw, layer.stride, layer.padding)
    out = cols @ weight.reshape(o, -1).T + bias[None, None, :]
    oh = (x.shape[2] + 2 * layer.padding - kh) // layer.stride + 1
    ow = (x.shape[3] + 2 * layer.padding - kw) // layer.stride + 1
    return out.transpose(0, 2, 1).reshape(b, o, oh, ow), cols


def _conv_backward(
    grad: np.ndarray, cols: np.ndarray, x_shape: tuple, weight: np.ndarray, layer, need_dx: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    b, o, oh, ow = grad.shape
    _, c, kh, kw = weight.shape
    g = grad.reshape(b, o, oh * ow).transpose(0, 2, 1)
    dw = np.einsum("bpo,bpk->ok", g, cols).reshape(weight.shape)
    db = g.sum(axis=(0, 1))
    if not need_dx:
        return dw, db, None

    s, p = layer.stride, layer.padding
    dcols = (g @ weight.reshape(o, -1)).reshape(b, oh, ow, c, kh, kw)
    dx = np.zeros((b, c, x_shape[2] + 2 * p, x_shape[3] + 2 * p), dtype=grad.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    if p:
        dx = dx[:, :, p:-p, p:-p]
    return dw, db, dx


def _pool_forward(x: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = windows.reshape(*windows.shape[:4], k * k)
    return flat.max(axis=-1), flat.argmax(axis=-1)


def _pool_backward(
    grad: np.ndarray, argmax: np.ndarray, x_shape: tuple, k: int, stride: int
) -> np.ndarray:
    dx = np.zeros(x_shape, dtype=grad.dtype)
    oh, ow = grad.shape[2:]
    for i in range(k):
        for j in range(k):
            routed = grad * (argmax == i * k + j)
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += routed
    return dx


def _forward(
    layers: list[LayerSpec], params: dict[int, dict[str, np.ndarray]], x: np.ndarray
) -> tuple[np.ndarray, list[tuple]]:
    cache: list[tuple] = []
    for idx, layer in enumerate(layers):
        match layer.kind:
            case "conv2d":
                out, cols = _conv_forward(x, params[idx]["weight"], params[idx]["bias"], layer)
                cache.append((x.shape, cols))
            case "dense":
                out = x @ params[idx]["weight"].T + params[idx]["bias"][None, :]
                cache.append((x,))
            case "maxpool2d":
                out, argmax = _pool_forward(x, layer.k, layer.stride)
                cache.append((x.shape, argmax))
            case "relu":
                out = np.maximum(x, 0.0)
                cache.append((x > 0,))
            case "flatten":
                out = x.reshape(x.shape[0], -1)
                cache.append((x.shape,))
        x = out
    return x, cache


def _backward(
    layers: list[LayerSpec],
    params: dict[int, dict[str, np.ndarray]],
    cache: list[tuple],
    grad: np.ndarray,
) -> dict[int, dict[str, np.ndarray]]:
    grads: dict[int, dict[str, np.ndarray]] = {}
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        match layer.kind:
            case "conv2d":
                x_shape, cols = cache[idx]
                dw, db, grad = _conv_backward(
                    grad, cols, x_shape, params[idx]["weight"], layer, need_dx=idx > 0
                )
                grads[idx] = {"weight": dw, "bias": db}
            case "dense":
                (x,) = cache[idx]
                grads[idx] = {"weight": grad.T @ x, "bias": grad.sum(axis=0)}
                grad = grad @ params[idx]["weight"]
            case "maxpool2d":
                x_shape, argmax = cache[idx]
                grad = _pool_backward(grad, argmax, x_shape, layer.k, layer.stride)
            case "relu":
                (mask,) = cache[idx]
                grad = grad * mask
            case "flatten":
                (x_shape,) = cache[idx]
                grad = grad.reshape(x_shape)
        if grad is None:
            break
    return grads


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def batch_accuracy(
    layers: list[LayerSpec],
    params: dict[int, dict[str, np.ndarray]],
    dataset: Dataset,
    batch_size: int = 256,
) -> float:
    """Float-path top-1 accuracy computed in batches."""
    if len(dataset) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(dataset), batch_size):
        logits, _ = _forward(layers, params, dataset.images[start : start + batch_size])
        correct += int((logits.argmax(axis=1) == dataset.labels[start : start + batch_size]).sum())
    return correct / len(dataset)


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seed-pinned train/test split; both parts keep the original order."""
    order = make_rng(seed, 1).permutation(len(dataset))
    n_test = max(1, int(round(len(dataset) * test_fraction)))
    test_idx, train_idx = np.sort(order[:n_test]), np.sort(order[n_test:])
    train = Dataset(
        images=dataset.images[train_idx], labels=dataset.labels[train_idx], name=f"{dataset.name}/train"
    )
    test = Dataset(
        images=dataset.images[test_idx], labels=dataset.labels[test_idx], name=f"{dataset.name}/test"
    )
    return train, test


# ===== Trainer =====


def train_fixture_model(
    dataset: Dataset,
    epochs: int = 3,
    seed: int = 0,
    layers: list[LayerSpec] | None = None,
    num_classes: int | None = None,
    config: TrainingConfig | None = None,
    output: str | Path | None = None,
) -> NetworkModel:
    """Train a small CNN and return it quantized (calibrated on training images).

    Args:
        dataset: Labeled images; a seed-pinned share is held out for testing
        epochs: Passes over the training split (0 keeps the random init)
        seed: Controls init, split and shuffling
        layers: Architecture (:func:`default_architecture` when None)
        num_classes: Class count (``max(label) + 1`` when None)
        config: Remaining hyper-parameters; its ``epochs``/``seed`` are overridden
        output: Manifest path to save the model to

    Returns:
        Quantized model whose metadata records seed, epochs, loss history and
        float-path test accuracy

    Raises:
        EmptyDatasetError: If the dataset is empty
        TrainingDivergedError: If a mini-batch loss is not finite
    """
    if len(dataset) < 2:
        raise EmptyDatasetError(f"Training needs at least two samples, got {len(dataset)}")
    config = (config or TrainingConfig()).model_copy(update={"epochs": epochs, "seed": seed})
    num_classes = num_classes or int(dataset.labels.max()) + 1
    layers = layers if layers is not None else default_architecture(num_classes)
    dataset.check_classes(num_classes)

    model = build_model(layers, dataset.input_shape, num_classes, seed, name=f"fixture-{seed}")
    params = {
        idx: {"weight": p.weight.astype(np.float64), "bias": p.bias.astype(np.float64)}
        for idx, p in model.float_weights.items()
    }
    velocity = {idx: {k: np.zeros_like(v) for k, v in p.items()} for idx, p in params.items()}
    train, test = split_dataset(dataset, config.test_fraction, seed)
    logger.info(
        f"Training {model.name}: {len(train)} train / {len(test)} test images, "
        f"{config.epochs} epochs"
    )

    history: list[float] = []
    for epoch in range(config.epochs):
        order = make_rng(seed, 2, epoch).permutation(len(train))
        losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            logits, cache = _forward(layers, params, train.images[batch].astype(np.float64))
            loss, grad = _cross_entropy(logits, train.labels[batch])
            if not np.isfinite(loss):
                logger.warning(f"Loss diverged at epoch {epoch}, step {step} (seed {seed})")
                raise TrainingDivergedError(
                    f"Non-finite loss at epoch {epoch}, step {step}; rerun with another seed "
                    f"than {seed} or a lower learning rate",
                    seed=seed,
                    epoch=epoch,
                    step=step,
                )
            losses.append(loss)
            for idx, g in _backward(layers, params, cache, grad).items():
                for key in ("weight", "bias"):
                    v = velocity[idx][key]
                    v *= config.momentum
                    v -= config.learning_rate * g[key]
                    params[idx][key] += v
        history.append(float(np.mean(losses)))
        logger.info(f"Epoch {epoch}: mean loss {history[-1]:.4f}")

    test_accuracy = batch_accuracy(layers, params, test)
    metadata: dict[str, Any] = {
        "training_seed": seed,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "loss_history": history,
        "train_size": len(train),
        "test_size": len(test),
        "test_accuracy": test_accuracy,
        "dataset": dataset.name,
        "dataset_checksum": dataset.checksum,
    }
    trained = model.with_float_weights(
        {
            idx: LayerParams(weight=p["weight"].astype(np.float32), bias=p["bias"].astype(np.float32))
            for idx, p in params.items()
        }
    ).model_copy(update={"metadata": metadata})
    trained = quantize_model(trained, calibration=train.images[:CALIBRATION_IMAGES])
    logger.info(f"Trained {trained.name}: test accuracy {test_accuracy:.4f}")

    if output is not None:
        save_model(trained, output)
    return trained
