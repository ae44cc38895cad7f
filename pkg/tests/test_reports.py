"""Tests for report persistence, CSV output and checkpoints."""

import csv
import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from axfi_lite.campaign import run_axc_campaign
from axfi_lite.exceptions import CampaignError
from axfi_lite.metrics import FaultClass
from axfi_lite.options import CampaignConfig
from axfi_lite.reports import (
    CHECKPOINT_FILE,
    OUTCOME_CSV_HEADER,
    REPORT_SCHEMA_VERSION,
    CampaignCheckpoint,
    Histogram,
    RunManifest,
    RuntimeStats,
    load_report,
    save_report,
    write_histogram_csv,
    write_outcomes_csv,
)


@pytest.fixture(scope="module")
def report(quant_model, bars):
    """Exact-LUT AxC report over eight images."""
    cfg = CampaignConfig.model_validate(
        {"mode": {"kind": "axmult", "lut": {"kind": "exact"}}, "compromised_layer": 0}
    )
    return run_axc_campaign(cfg, model=quant_model, dataset=bars.subset(8, seed=2))


class TestReportFiles:
    """Test save_report and load_report."""

    def test_round_trip(self, report, tmp_path):
        """Test that a report with infinite PSNR survives JSON."""
        path = save_report(report, tmp_path / "nested" / "report.json")
        raw = json.loads(path.read_text())
        assert raw["schema_version"] == REPORT_SCHEMA_VERSION
        assert raw["outcomes"][0]["metrics"]["psnr_db"] == "inf"

        loaded = load_report(path)
        assert loaded.config_hash == report.config_hash
        assert math.isinf(loaded.outcomes[0].metrics.psnr_db)
        assert loaded.class_counts == report.class_counts
        np.testing.assert_array_equal(loaded.neuron_peaks(), report.neuron_peaks())

    def test_invalid_json(self, tmp_path):
        """Test a file that is not JSON."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(CampaignError, match="invalid JSON"):
            load_report(path)

    def test_schema_version(self, report, tmp_path):
        """Test that unknown schema versions are refused."""
        data = json.loads(report.model_dump_json())
        data["schema_version"] = 99
        path = tmp_path / "future.json"
        path.write_text(json.dumps(data))
        with pytest.raises(CampaignError, match="schema version 99"):
            load_report(path)

    def test_not_a_report(self, tmp_path):
        """Test a JSON document of another kind."""
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"schema_version": REPORT_SCHEMA_VERSION, "kind": "axc"}))
        with pytest.raises(CampaignError, match="not a campaign report"):
            load_report(path)

    def test_class_counts_must_add_up(self, report):
        """Test the class-count total check."""
        data = report.model_dump()
        data["evaluated_faults"] += 1
        with pytest.raises(ValidationError):
            type(report).model_validate(data)

    def test_missing_summary(self, report):
        """Test asking for a layer without a summary."""
        with pytest.raises(CampaignError):
            report.summary(layer=99)


class TestCsv:
    """Test CSV writers."""

    def test_outcomes(self, report, tmp_path):
        """Test one row per outcome with 'inf' for identical OFMs."""
        path = write_outcomes_csv(report, tmp_path / "outcomes.csv")
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == OUTCOME_CSV_HEADER
        assert len(rows) == len(report.outcomes) + 1
        first = rows[1]
        assert first[1] == FaultClass.MASKED.value
        assert float(first[2]) == 0.0
        assert first[3] == "inf"
        assert float(first[4]) == 1.0

    def test_histogram(self, tmp_path):
        """Test histogram rows."""
        hist = Histogram(edges=[0.0, 0.5, 1.0], counts=[2, 1], sentinel=1)
        assert hist.total == 4
        path = write_histogram_csv(hist, tmp_path / "hist.csv")
        lines = path.read_text().splitlines()
        assert lines == ["bin_left,bin_right,count", "0.0,0.5,2", "0.5,1.0,1"]


class TestMetricValues:
    """Test metric extraction for histograms."""

    def test_values(self, report):
        """Test SSIM and depth values of every outcome."""
        assert report.metric_values("ssim") == [1.0] * len(report.outcomes)
        assert report.metric_values("depth") == [float(o.depth) for o in report.outcomes]

    def test_class_filter(self, report):
        """Test filtering by fault class."""
        assert report.metric_values("max_difference", FaultClass.CRITICAL) == []
        masked = report.metric_values("max_difference", FaultClass.MASKED)
        assert len(masked) == report.class_counts[FaultClass.MASKED]


class TestRuntimeStats:
    """Test campaign timing figures."""

    def test_seconds_per_item_skips_resumed(self):
        """Test that resumed items do not dilute the per-item cost."""
        stats = RuntimeStats(campaign_seconds=2.0, items=10, resumed_items=6)
        assert stats.seconds_per_item == pytest.approx(0.5)

    def test_nothing_computed(self):
        """Test a fully resumed campaign."""
        assert RuntimeStats(campaign_seconds=1.0, items=3, resumed_items=3).seconds_per_item == 0.0

    def test_report_carries_timing(self, report):
        """Test that a finished campaign records its items."""
        assert report.runtime.items == 8
        assert report.runtime.seconds_per_item >= 0.0


class TestRunManifest:
    """Test run manifests."""

    def test_output_paths(self, tmp_path):
        """Test resolving relative and absolute outputs."""
        manifest = RunManifest(
            command="axc-run",
            argv=["axc-run", "cfg.json"],
            outputs={"report": "report.json", "elsewhere": str(tmp_path / "x.csv")},
        )
        assert manifest.output("report", tmp_path) == tmp_path / "report.json"
        assert manifest.output("elsewhere", "/unused") == tmp_path / "x.csv"
        with pytest.raises(CampaignError):
            manifest.output("missing", tmp_path)


class TestCheckpoint:
    """Test CampaignCheckpoint."""

    def test_open_checks_config(self, tmp_path):
        """Test that a run directory belongs to one config hash."""
        CampaignCheckpoint(tmp_path / "run", "abc").open()
        assert (tmp_path / "run" / CHECKPOINT_FILE).exists()
        CampaignCheckpoint(tmp_path / "run", "abc").open()
        with pytest.raises(CampaignError):
            CampaignCheckpoint(tmp_path / "run", "def").open()

    def test_record_and_resume(self, report, tmp_path):
        """Test recorded outcomes and peaks come back."""
        checkpoint = CampaignCheckpoint(tmp_path, "h")
        checkpoint.open()
        assert checkpoint.completed() == {}
        assert checkpoint.load_peaks() is None
        peaks = np.array([0.0, 0.5, 1.5])
        for outcome in report.outcomes[:3]:
            checkpoint.record(outcome, peaks)
        checkpoint.record(report.outcomes[3], None)

        done = checkpoint.completed()
        assert sorted(done) == sorted(o.key for o in report.outcomes[:4])
        assert done[report.outcomes[0].key].model_dump_json() == report.outcomes[0].model_dump_json()
        np.testing.assert_array_equal(checkpoint.load_peaks(), peaks)

    def test_torn_line_dropped(self, report, tmp_path):
        """Test that a partial final line is discarded and later appends stay readable."""
        checkpoint = CampaignCheckpoint(tmp_path, "h")
        checkpoint.open()
        checkpoint.record(report.outcomes[0], None)
        with open(checkpoint.outcomes_path, "a") as f:
            f.write(report.outcomes[1].model_dump_json()[:20])

        assert list(checkpoint.completed()) == [report.outcomes[0].key]
        checkpoint.record(report.outcomes[2], None)
        assert list(checkpoint.completed()) == [report.outcomes[0].key, report.outcomes[2].key]
