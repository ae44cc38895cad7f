"""Layer operations for the float32 and the int8 inference paths.

Each operation accepts either a float array (float path) or a
:class:`~axfi_lite.tensors.QuantTensor` (quant path). On the quant path every
product of a Conv2D/Dense layer goes through a multiplier hook, accumulators are
exact integers, and outputs are requantized with round-half-away and a
saturating clamp. Non-finite float values are propagated, never rejected.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from axfi_lite.exceptions import ConfigurationError, ShapeError
from axfi_lite.multipliers import NATIVE, Multiplier
from axfi_lite.tensors import QuantTensor, requantize

Array = np.ndarray


def im2col(x: Array, kernel_h: int, kernel_w: int, stride: int, padding: int) -> Array:
    """Unfold (N, C, H, W) into (N, OH*OW, C*kh*kw) patches, channel-major."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kernel_h, kernel_w), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    n, c, oh, ow = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kernel_h * kernel_w)


def _check_conv(x_shape: tuple[int, ...], w_shape: tuple[int, ...], bias_len: int) -> None:
    if len(x_shape) != 3 or len(w_shape) != 4:
        raise ShapeError(f"conv2d expects (C,H,W) input and (O,C,kh,kw) weights, got {x_shape}, {w_shape}")
    if x_shape[0] != w_shape[1]:
        raise ShapeError(f"conv2d input has {x_shape[0]} channels, weights expect {w_shape[1]}")
    if bias_len != w_shape[0]:
        raise ShapeError(f"conv2d bias has {bias_len} entries, expected {w_shape[0]}")


def _check_quant_args(weight: object, bias: object, output_scale: float | None) -> None:
    if not isinstance(weight, QuantTensor):
        raise ConfigurationError("Quantized input requires quantized weights")
    if bias is None or output_scale is None:
        raise ConfigurationError("Quantized layers need an int32 bias and an output scale")


def conv2d(
    x: Array | QuantTensor,
    weight: Array | QuantTensor,
    bias: Array,
    *,
    stride: int = 1,
    padding: int = 0,
    mult: Multiplier | None = None,
    output_scale: float | None = None,
) -> Array | QuantTensor:
    """2-D convolution of one (C, H, W) input.

    Args:
        x: Float input or QuantTensor input
        weight: (O, C, kh, kw) float weights or QuantTensor weights
        bias: (O,) float bias, or int32 bias at scale ``x.scale * weight.scale``
        stride: Window stride
        padding: Zero padding on each spatial side
        mult: Multiplier hook for the quant path (native integer multiply if None)
        output_scale: Requantization scale of the output (quant path)

    Returns:
        (O, OH, OW) output of the same kind as ``x``

    Raises:
        ShapeError: If shapes do not chain (checked before any compute)
    """
    w_shape = weight.shape if isinstance(weight, QuantTensor) else np.shape(weight)
    x_shape = x.shape if isinstance(x, QuantTensor) else np.shape(x)
    _check_conv(tuple(x_shape), tuple(w_shape), len(bias))
    o, _, kh, kw = w_shape

    if isinstance(x, QuantTensor):
        _check_quant_args(weight, bias, output_scale)
        cols = im2col(x.data[None], kh, kw, stride, padding)[0]
        oh = (x_shape[1] + 2 * padding - kh) // stride + 1
        ow = (x_shape[2] + 2 * padding - kw) // stride + 1
        acc = (mult or NATIVE).dot(cols, weight.data.reshape(o, -1))
        acc = acc + np.asarray(bias, dtype=np.int64)[None, :]
        out = requantize(acc, x.scale, weight.scale, output_scale)
        return QuantTensor(data=np.ascontiguousarray(out.T).reshape(o, oh, ow), scale=output_scale)

    if mult is not None and not mult.is_exact:
        raise ConfigurationError("The float path multiplies exactly; approximate hooks need int8")
    x = np.asarray(x, dtype=np.float32)
    cols = im2col(x[None], kh, kw, stride, padding)[0]
    oh = (x_shape[1] + 2 * padding - kh) // stride + 1
    ow = (x_shape[2] + 2 * padding - kw) // stride + 1
    bias = np.asarray(bias, dtype=np.float32)
    with np.errstate(all="ignore"):
        out = cols @ np.asarray(weight, dtype=np.float32).reshape(o, -1).T + bias[None, :]
    return np.ascontiguousarray(out.T).reshape(o, oh, ow).astype(np.float32, copy=False)


def dense(
    x: Array | QuantTensor,
    weight: Array | QuantTensor,
    bias: Array,
    *,
    mult: Multiplier | None = None,
    output_scale: float | None = None,
) -> Array | QuantTensor:
    """Matrix-vector product ``W x + b`` with the conv2d requantization contract."""
    w_shape = weight.shape if isinstance(weight, QuantTensor) else np.shape(weight)
    x_shape = x.shape if isinstance(x, QuantTensor) else np.shape(x)
    if len(x_shape) != 1 or len(w_shape) != 2 or w_shape[1] != x_shape[0]:
        raise ShapeError(f"dense input {x_shape} does not match weights {w_shape}")
    if len(bias) != w_shape[0]:
        raise ShapeError(f"dense bias has {len(bias)} entries, expected {w_shape[0]}")

    if isinstance(x, QuantTensor):
        _check_quant_args(weight, bias, output_scale)
        acc = (mult or NATIVE).dot(x.data[None, :], weight.data)[0]
        acc = acc + np.asarray(bias, dtype=np.int64)
        return QuantTensor(data=requantize(acc, x.scale, weight.scale, output_scale), scale=output_scale)

    if mult is not None and not mult.is_exact:
        raise ConfigurationError("The float path multiplies exactly; approximate hooks need int8")
    with np.errstate(all="ignore"):
        out = np.asarray(weight, dtype=np.float32) @ np.asarray(x, dtype=np.float32)
        out = out + np.asarray(bias, dtype=np.float32)
    return out.astype(np.float32, copy=False)


def maxpool2d(x: Array | QuantTensor, k: int, stride: int) -> Array | QuantTensor:
    """Max over k x k windows of a (C, H, W) input."""
    data = x.data if isinstance(x, QuantTensor) else np.asarray(x)
    if data.ndim != 3:
        raise ShapeError(f"maxpool2d expects (C,H,W), got {data.shape}")
    windows = sliding_window_view(data, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    pooled = windows.max(axis=(-2, -1))
    if isinstance(x, QuantTensor):
        return x.with_data(pooled)
    return pooled


def relu(x: Array | QuantTensor) -> Array | QuantTensor:
    """Elementwise max(0, x); max(zero_point, x) on the quant path."""
    if isinstance(x, QuantTensor):
        return x.with_data(np.maximum(x.data, np.int8(x.zero_point)))
    return np.maximum(x, np.float32(0.0))


def flatten(x: Array | QuantTensor) -> Array | QuantTensor:
    """Row-major flatten."""
    if isinstance(x, QuantTensor):
        return x.with_data(x.data.reshape(-1))
    return np.asarray(x).reshape(-1)
