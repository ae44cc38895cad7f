"""Behavioral 8x8 signed multiplier models.

Every multiplication of a quantized Conv2D/Dense layer routes through a
:class:`Multiplier`. :class:`NativeMultiplier` is plain integer arithmetic;
:class:`MultiplierLUT` looks each product up in a 256x256 table, which is how
approximate circuits are emulated: the operands select the stored output.

LUT file layout (little-endian):
    offset 0   8 bytes   magic b"AXLUT\\x00\\x01\\x00"
    offset 8   65,536 x int32 entries, entry (a, b) at index (a+128)*256 + (b+128)

An optional JSON sidecar (same stem, ``.json``) carries ``name`` and
``provenance``.
"""

import json
import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from axfi_lite.exceptions import (
    ConfigurationError,
    LUTLengthError,
    LUTMagicError,
    LUTRangeError,
)

logger = logging.getLogger(__name__)

LUT_MAGIC = b"AXLUT\x00\x01\x00"
LUT_SIDE = 256
LUT_ENTRIES = LUT_SIDE * LUT_SIDE
PRODUCT_MIN = -32768
PRODUCT_MAX = 32767

# Upper bound on temporary (positions x outputs x taps) gathers
_GATHER_BUDGET = 1 << 22

FixtureKind = Literal["operand_truncate", "product_offset", "product_zero_lsb"]


def operand_grid() -> tuple[np.ndarray, np.ndarray]:
    """All signed operand pairs as broadcastable (256, 1) and (1, 256) int64 arrays."""
    a = np.arange(-128, 128, dtype=np.int64)[:, None]
    b = np.arange(-128, 128, dtype=np.int64)[None, :]
    return a, b


def lut_index(a: np.ndarray | int, b: np.ndarray | int) -> np.ndarray | int:
    """Flat table index for signed operands (offset-128 row-major)."""
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (np.asarray(a, dtype=np.int32) + 128) * LUT_SIDE + (np.asarray(b, dtype=np.int32) + 128)
    return (int(a) + 128) * LUT_SIDE + (int(b) + 128)


class Multiplier(ABC):
    """Abstract base class for multiplier hooks."""

    name: str

    @property
    def is_exact(self) -> bool:
        return False

    @abstractmethod
    def products(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise (broadcast) products of int8 operands as int64."""

    def dot(self, cols: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Accumulate products of every row of ``cols`` with every row of ``weights``.

        Args:
            cols: (P, K) int8 activations (im2col rows or one dense input row)
            weights: (O, K) int8 weights

        Returns:
            (P, O) int64 accumulators, exact
        """
        p, k = cols.shape
        o = weights.shape[0]
        out = np.empty((p, o), dtype=np.int64)
        step = max(1, _GATHER_BUDGET // max(1, o * k))
        for start in range(0, p, step):
            block = cols[start : start + step]
            prods = self.products(block[:, None, :], weights[None, :, :])
            out[start : start + step] = prods.sum(axis=-1, dtype=np.int64)
        return out


class NativeMultiplier(Multiplier):
    """Exact integer multiplication (the ExMult reference)."""

    name = "native"

    @property
    def is_exact(self) -> bool:
        return True

    def products(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)

    def dot(self, cols: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return cols.astype(np.int64) @ weights.astype(np.int64).T


NATIVE = NativeMultiplier()


class MultiplierLUT(BaseModel, Multiplier):
    """256x256 table of signed products, the behavioral model of one multiplier.

    Example:
        ```python
        lut = build_fixture_lut("operand_truncate", 2)
        lut_multiply(lut, 7, 5)   # 16
        ```
    """

    name: str
    table: np.ndarray
    provenance: dict[str, Any] = {}

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("table")
    def validate_table(cls, v: Any) -> np.ndarray:
        """Require 65,536 entries inside the 16-bit product range."""
        arr = np.asarray(v)
        if arr.size != LUT_ENTRIES:
            raise ValueError(f"LUT must hold {LUT_ENTRIES} entries, got {arr.size}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("LUT entries must be integers")
        if arr.min() < PRODUCT_MIN or arr.max() > PRODUCT_MAX:
            raise ValueError("LUT entries must lie in [-32768, 32767]")
        table = arr.reshape(LUT_ENTRIES).astype(np.int32)
        table.setflags(write=False)
        return table

    def products(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.table[lut_index(a, b)].astype(np.int64)

    def as_matrix(self) -> np.ndarray:
        """(256, 256) view, row = a + 128, column = b + 128."""
        return self.table.reshape(LUT_SIDE, LUT_SIDE)

    @property
    def is_exact(self) -> bool:
        a, b = operand_grid()
        return bool(np.array_equal(self.as_matrix(), (a * b).astype(np.int32)))


def lut_multiply(lut: MultiplierLUT, a: int, b: int) -> int:
    """Look up one product, sign-extended to accumulator width."""
    return int(lut.table[lut_index(a, b)])


def lut_from_function(
    name: str, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], **provenance: Any
) -> MultiplierLUT:
    """Tabulate a vectorized behavioral multiplier ``fn(a, b)`` over all operand pairs."""
    a, b = operand_grid()
    table = np.asarray(fn(a, b), dtype=np.int64)
    table = np.broadcast_to(table, (LUT_SIDE, LUT_SIDE))
    return MultiplierLUT(name=name, table=table.reshape(-1), provenance=dict(provenance))


def build_exact_lut() -> MultiplierLUT:
    """LUT of exact products (ExMult)."""
    return lut_from_function("exact", lambda a, b: a * b, kind="exact")


def _arith_clear_low_bits(x: np.ndarray, k: int) -> np.ndarray:
    return (x >> k) << k


def build_fixture_lut(kind: FixtureKind, param: int) -> MultiplierLUT:
    """Self-contained approximate multipliers used as stand-ins for library circuits.

    Args:
        kind: ``operand_truncate`` clears the ``param`` low bits of each operand
            (arithmetic shift) before an exact multiply; ``product_offset`` adds
            ``param`` to every exact product, saturating at the 16-bit bounds;
            ``product_zero_lsb`` clears the ``param`` low bits of the product.
        param: k in [0, 7] for the bit-clearing kinds, any integer offset otherwise

    Raises:
        ConfigurationError: If the kind is unknown or ``param`` is out of range
    """
    if kind in ("operand_truncate", "product_zero_lsb") and not 0 <= param <= 7:
        raise ConfigurationError(f"{kind} requires 0 <= k <= 7, got {param}")

    match kind:
        case "operand_truncate":

            def fn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
                return _arith_clear_low_bits(a, param) * _arith_clear_low_bits(b, param)

        case "product_offset":

            def fn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
                return np.clip(a * b + param, PRODUCT_MIN, PRODUCT_MAX)

        case "product_zero_lsb":

            def fn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
                return _arith_clear_low_bits(a * b, param)

        case _:
            raise ConfigurationError(f"Unknown fixture LUT kind: {kind}")

    return lut_from_function(f"{kind}({param})", fn, kind=kind, param=param)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_lut(lut: MultiplierLUT, path: str | Path) -> None:
    """Write ``lut`` in the binary LUT format plus its JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(LUT_MAGIC)
        f.write(lut.table.astype("<i4").tobytes())
    sidecar = {"name": lut.name, "provenance": lut.provenance}
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2, default=str))
    logger.info(f"Saved LUT {lut.name!r} to {path}")


def load_lut(path: str | Path) -> MultiplierLUT:
    """Read a LUT file.

    Raises:
        LUTMagicError: Wrong magic bytes (offset 0)
        LUTLengthError: Payload does not hold exactly 65,536 entries
        LUTRangeError: An entry lies outside [-32768, 32767]
    """
    path = Path(path)
    raw = path.read_bytes()

    if raw[: len(LUT_MAGIC)] != LUT_MAGIC:
        raise LUTMagicError(
            f"{path}: bad magic {raw[:len(LUT_MAGIC)]!r}, expected {LUT_MAGIC!r}",
            path=path,
            offset=0,
        )

    payload = raw[len(LUT_MAGIC) :]
    found = len(payload) // 4
    if len(payload) != LUT_ENTRIES * 4:
        raise LUTLengthError(
            f"{path}: payload holds {found} entries (+{len(payload) % 4} stray bytes), "
            f"declared entry count is {LUT_ENTRIES}",
            path=path,
            found=found,
            expected=LUT_ENTRIES,
        )

    table = np.frombuffer(payload, dtype="<i4").astype(np.int64)
    bad = np.flatnonzero((table < PRODUCT_MIN) | (table > PRODUCT_MAX))
    if bad.size:
        index = int(bad[0])
        raise LUTRangeError(
            f"{path}: entry {index} has value {int(table[index])} outside [-32768, 32767]",
            path=path,
            index=index,
            value=int(table[index]),
        )

    name = path.stem
    provenance: dict[str, Any] = {"source": str(path)}
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        name = meta.get("name", name)
        provenance = meta.get("provenance", provenance)

    logger.debug(f"Loaded LUT {name!r} from {path}")
    return MultiplierLUT(name=name, table=table, provenance=provenance)
