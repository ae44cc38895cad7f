"""Tests for multiplier hooks and the LUT file format."""

import numpy as np
import pytest
from pydantic import ValidationError
from test_helpers import random_int8

from axfi_lite.exceptions import ConfigurationError, LUTLengthError, LUTMagicError, LUTRangeError
from axfi_lite.multipliers import (
    LUT_ENTRIES,
    LUT_MAGIC,
    NATIVE,
    MultiplierLUT,
    build_exact_lut,
    build_fixture_lut,
    load_lut,
    lut_from_function,
    lut_index,
    lut_multiply,
    save_lut,
)


class TestLutLookup:
    """Test table indexing and lookups."""

    def test_index_layout(self):
        """Test the offset-128 row-major index."""
        assert lut_index(-128, -128) == 0
        assert lut_index(-128, -127) == 1
        assert lut_index(127, 127) == LUT_ENTRIES - 1

    def test_exact_lut(self):
        """Test exact products, including the extreme corner."""
        lut = build_exact_lut()
        assert lut.is_exact
        assert lut_multiply(lut, -128, -128) == 16384
        assert lut_multiply(lut, -7, 9) == -63

    def test_native_is_exact(self):
        """Test the native multiplier flag."""
        assert NATIVE.is_exact
        assert NATIVE.products(np.array([-3]), np.array([4])).tolist() == [-12]

    def test_lut_dot_matches_native(self, rng):
        """Test blocked LUT accumulation against integer matmul."""
        cols = random_int8(rng, (10_000, 64))
        weights = random_int8(rng, (8, 64))
        np.testing.assert_array_equal(
            build_exact_lut().dot(cols, weights), NATIVE.dot(cols, weights)
        )


class TestFixtureLuts:
    """Test the built-in approximate multipliers."""

    def test_operand_truncate(self):
        """Test arithmetic-shift truncation of both operands."""
        lut = build_fixture_lut("operand_truncate", 2)
        assert lut_multiply(lut, 7, 5) == 16
        assert lut_multiply(lut, -5, 4) == -32
        assert lut.name == "operand_truncate(2)"
        assert not lut.is_exact

    def test_operand_truncate_zero_is_exact(self):
        """Test that k=0 reproduces exact products."""
        assert build_fixture_lut("operand_truncate", 0).is_exact

    def test_product_offset_saturates(self):
        """Test that offsets clamp at the 16-bit bounds."""
        lut = build_fixture_lut("product_offset", 20000)
        assert lut_multiply(lut, -128, -128) == 32767
        assert lut_multiply(lut, 0, 0) == 20000

    def test_product_zero_lsb(self):
        """Test clearing low product bits."""
        lut = build_fixture_lut("product_zero_lsb", 3)
        assert lut_multiply(lut, 7, 5) == 32
        assert lut_multiply(lut, -7, 5) == -40

    @pytest.mark.parametrize("kind,param", [("operand_truncate", 8), ("product_zero_lsb", -1)])
    def test_param_out_of_range(self, kind, param):
        """Test the bit-count bounds."""
        with pytest.raises(ConfigurationError):
            build_fixture_lut(kind, param)

    def test_unknown_kind(self):
        """Test that unknown kinds are rejected."""
        with pytest.raises(ConfigurationError):
            build_fixture_lut("magic", 1)

    def test_from_function_broadcasts(self):
        """Test tabulating a function that ignores one operand."""
        lut = lut_from_function("left", lambda a, b: a * 0 + a)
        assert lut_multiply(lut, 9, -100) == 9
        assert lut.provenance == {}


class TestMultiplierLUTValidation:
    """Test table validation."""

    def test_wrong_size(self):
        """Test that tables need 65,536 entries."""
        with pytest.raises(ValidationError):
            MultiplierLUT(name="short", table=np.zeros(10, dtype=np.int32))

    def test_out_of_range(self):
        """Test the signed 16-bit bound."""
        table = np.zeros(LUT_ENTRIES, dtype=np.int64)
        table[3] = 40000
        with pytest.raises(ValidationError):
            MultiplierLUT(name="wide", table=table)

    def test_table_read_only(self):
        """Test that stored tables cannot be mutated."""
        lut = build_exact_lut()
        with pytest.raises(ValueError):
            lut.table[0] = 1


class TestLutFiles:
    """Test save_lut / load_lut."""

    def test_roundtrip(self, tmp_path):
        """Test that the table and sidecar metadata survive."""
        lut = build_fixture_lut("operand_truncate", 3)
        save_lut(lut, tmp_path / "trunc3.axlut")
        loaded = load_lut(tmp_path / "trunc3.axlut")
        np.testing.assert_array_equal(loaded.table, lut.table)
        assert loaded.name == "operand_truncate(3)"
        assert loaded.provenance["param"] == 3

    def test_without_sidecar(self, tmp_path):
        """Test that the file stem names a LUT without sidecar."""
        save_lut(build_exact_lut(), tmp_path / "mul8s_exact.axlut")
        (tmp_path / "mul8s_exact.json").unlink()
        loaded = load_lut(tmp_path / "mul8s_exact.axlut")
        assert loaded.name == "mul8s_exact"
        assert loaded.is_exact

    def test_bad_magic(self, tmp_path):
        """Test the magic check reports offset 0."""
        path = tmp_path / "bad.axlut"
        path.write_bytes(b"NOTALUT!" + bytes(LUT_ENTRIES * 4))
        with pytest.raises(LUTMagicError) as exc_info:
            load_lut(path)
        assert exc_info.value.offset == 0

    def test_truncated(self, tmp_path):
        """Test that short payloads report found vs expected entries."""
        path = tmp_path / "short.axlut"
        path.write_bytes(LUT_MAGIC + np.zeros(100, dtype="<i4").tobytes())
        with pytest.raises(LUTLengthError) as exc_info:
            load_lut(path)
        assert exc_info.value.found == 100
        assert exc_info.value.expected == LUT_ENTRIES

    def test_entry_out_of_range(self, tmp_path):
        """Test that the first out-of-range entry is reported."""
        table = np.zeros(LUT_ENTRIES, dtype="<i4")
        table[5] = 40000
        table[9] = -40000
        path = tmp_path / "wide.axlut"
        path.write_bytes(LUT_MAGIC + table.tobytes())
        with pytest.raises(LUTRangeError) as exc_info:
            load_lut(path)
        assert exc_info.value.index == 5
        assert exc_info.value.value == 40000
