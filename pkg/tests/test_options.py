"""Tests for campaign and sweep configuration."""

import json

import pytest
from pydantic import ValidationError

from axfi_lite.exceptions import ConfigurationError
from axfi_lite.options import (
    RUN_ROOT_ENV,
    AxMultMode,
    AxMultPlusMode,
    CampaignConfig,
    FIMode,
    LutSource,
    SuppressorOnlyMode,
    SweepConfig,
)


def _config(**overrides):
    data = {"mode": {"kind": "fi"}, "compromised_layer": 0}
    data.update(overrides)
    return CampaignConfig.model_validate(data)


class TestLutSource:
    """Test LUT sources."""

    def test_file_needs_path(self):
        """Test that file sources name a path."""
        with pytest.raises(ValidationError):
            LutSource(kind="file")

    def test_fixture_needs_param(self):
        """Test that fixture kinds name a parameter."""
        with pytest.raises(ValidationError):
            LutSource(kind="operand_truncate")

    def test_labels(self):
        """Test display labels."""
        assert LutSource().label() == "exact"
        assert LutSource(kind="product_offset", param=-3).label() == "product_offset(-3)"
        assert LutSource(kind="file", path="luts/mul8s_1KV6.axlut").label() == "mul8s_1KV6"

    def test_load_builtin(self):
        """Test materializing built-in tables."""
        assert LutSource().load().is_exact
        assert LutSource(kind="product_zero_lsb", param=2).load().name == "product_zero_lsb(2)"


class TestModes:
    """Test the tagged campaign modes."""

    def test_discriminated_union(self):
        """Test that the kind tag selects the mode class."""
        assert isinstance(_config().mode, FIMode)
        axmult = _config(mode={"kind": "axmult", "lut": {"kind": "exact"}})
        assert isinstance(axmult.mode, AxMultMode)
        plus = _config(mode={"kind": "axmult_plus", "lut": {"kind": "exact"}})
        assert isinstance(plus.mode, AxMultPlusMode)
        assert plus.mode.suppressor.bit_mask == [6, 7]
        assert isinstance(_config(mode={"kind": "suppressor"}).mode, SuppressorOnlyMode)

    def test_unknown_kind(self):
        """Test that unknown modes fail validation."""
        with pytest.raises(ValidationError):
            _config(mode={"kind": "laser"})

    def test_fi_defaults_and_path(self):
        """Test FI defaults and the execution path per site."""
        mode = FIMode()
        assert (mode.fault_model, mode.site, mode.rate) == ("rate", "weight_i8", 0.1)
        assert mode.path == "quant"
        assert FIMode(site="weight_f32").path == "float"
        assert FIMode(fault_model="single", site="ofm_i8").label() == "FI-single[ofm_i8]"

    def test_labels(self):
        """Test mode labels used in reports."""
        mode = AxMultPlusMode(lut=LutSource(kind="operand_truncate", param=3))
        assert mode.label() == "AxMult+[operand_truncate(3)]"
        assert SuppressorOnlyMode().label() == "Suppressor"


class TestCampaignConfig:
    """Test CampaignConfig validation and helpers."""

    def test_counts_exclusive(self):
        """Test that sample_size and faults_per_image exclude each other."""
        with pytest.raises(ValidationError):
            _config(sample_size=10, faults_per_image=2)

    def test_unsupported_confidence(self):
        """Test the confidence table."""
        with pytest.raises(ValidationError):
            _config(confidence=0.8)

    def test_labels_need_images(self):
        """Test that a label file alone is rejected."""
        with pytest.raises(ValidationError):
            _config(dataset_labels="labels-idx1-ubyte")

    def test_eps_per_path(self):
        """Test that float FI uses float_eps and everything else quant_eps."""
        cfg = _config(mode={"kind": "fi", "site": "weight_f32"}, float_eps=0.5, quant_eps=0.0)
        assert cfg.eps == 0.5
        assert _config(float_eps=0.5, quant_eps=1.0).eps == 1.0

    def test_content_hash_ignores_execution_fields(self, tmp_path):
        """Test that workers, progress and output dir do not change the hash."""
        base = _config()
        same = _config(workers=4, show_progress=True, output_dir=str(tmp_path))
        assert base.content_hash() == same.content_hash()
        assert base.content_hash() != _config(master_seed=1).content_hash()

    def test_run_dir(self, tmp_path, monkeypatch):
        """Test hash-named run directories under the run root."""
        monkeypatch.setenv(RUN_ROOT_ENV, str(tmp_path))
        cfg = _config()
        assert cfg.run_dir() == tmp_path / f"fi-{cfg.content_hash()}"
        assert _config(output_dir=str(tmp_path / "x")).run_dir() == tmp_path / "x"

    def test_from_file_resolves_paths(self, tmp_path):
        """Test that relative paths resolve against the config directory."""
        path = tmp_path / "cfg" / "campaign.json"
        path.parent.mkdir()
        path.write_text(
            json.dumps(
                {
                    "model_path": "model.json",
                    "dataset_images": "/data/images",
                    "mode": {"kind": "axmult", "lut": {"kind": "file", "path": "m.axlut"}},
                    "compromised_layer": 3,
                }
            )
        )
        cfg = CampaignConfig.from_file(path)
        assert cfg.model_path == tmp_path / "cfg" / "model.json"
        assert str(cfg.dataset_images) == "/data/images"
        assert cfg.mode.lut.path == tmp_path / "cfg" / "m.axlut"

    def test_from_file_invalid_json(self, tmp_path):
        """Test that malformed files raise ConfigurationError."""
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ConfigurationError):
            CampaignConfig.from_file(path)

    def test_hash_independent_of_location(self, tmp_path):
        """Test that one config file hashes the same from two directories."""
        doc = {
            "model_path": "model.json",
            "dataset_images": "images-idx3-ubyte",
            "dataset_labels": "labels-idx1-ubyte",
            "mode": {"kind": "axmult", "lut": {"kind": "file", "path": "luts/m.axlut"}},
            "compromised_layer": 0,
        }
        hashes = []
        for name in ("a", "b/nested"):
            path = tmp_path / name / "campaign.json"
            path.parent.mkdir(parents=True)
            path.write_text(json.dumps(doc))
            hashes.append(CampaignConfig.from_file(path).content_hash())
        assert hashes[0] == hashes[1]
        assert hashes[0] == CampaignConfig.model_validate(doc).content_hash()

    def test_with_updates_keeps_hash_base(self, tmp_path):
        """Test that overrides keep paths relative to the config file for hashing."""
        path = tmp_path / "campaign.json"
        path.write_text(
            json.dumps({"model_path": "model.json", "mode": {"kind": "fi"}, "compromised_layer": 0})
        )
        cfg = CampaignConfig.from_file(path)
        updated = cfg.with_updates(master_seed=7)
        assert updated.model_path == tmp_path / "model.json"
        expected = _config(model_path="model.json", master_seed=7).content_hash()
        assert updated.content_hash() == expected

    def test_measured_layer(self):
        """Test the measured layer default and ordering."""
        assert _config(compromised_layer=2).peak_layer == 2
        assert _config(compromised_layer=0, measured_layer=3).peak_layer == 3
        with pytest.raises(ValidationError):
            _config(compromised_layer=3, measured_layer=1)

    def test_depth_eps_follows_masked_eps(self):
        """Test that propagation uses the Masked tolerance unless overridden."""
        assert _config(quant_eps=0.25).depth_eps == 0.25
        assert _config(quant_eps=0.25, propagation_eps=0.0).depth_eps == 0.0


class TestSweepConfig:
    """Test sweep configuration."""

    def test_needs_luts(self, tmp_path):
        """Test that a sweep names at least one LUT."""
        with pytest.raises(ValidationError):
            SweepConfig(model_path="m.json", dataset_images="i", dataset_labels="l", luts=[])

    def test_from_file_resolves_paths(self, tmp_path):
        """Test path resolution including LUT files."""
        path = tmp_path / "sweep.json"
        path.write_text(
            json.dumps(
                {
                    "model_path": "m.json",
                    "dataset_images": "i",
                    "dataset_labels": "l",
                    "luts": [{"kind": "exact"}, {"kind": "file", "path": "a.axlut"}],
                }
            )
        )
        cfg = SweepConfig.from_file(path)
        assert cfg.model_path == tmp_path / "m.json"
        assert cfg.luts[0].path is None
        assert cfg.luts[1].path == tmp_path / "a.axlut"
