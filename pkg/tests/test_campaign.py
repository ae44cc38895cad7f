"""Tests for golden runs, FI and AxC campaigns, comparisons and sweeps."""

import time

import numpy as np
import pytest
from test_helpers import (
    CONV1,
    CONV2,
    DENSE,
    EVOAPPROX_DIR_ENV,
    MNIST_DIR_ENV,
    RELU1,
    external_dir,
    requires_evoapprox,
    requires_mnist,
)

from axfi_lite.campaign import (
    compare_campaigns,
    histogram,
    measure_metric_overhead,
    plan_fault_count,
    protection_set,
    run_axc_campaign,
    run_campaign,
    run_fi_campaign,
    run_golden,
    run_multiplier_sweep,
    threshold_for_size,
)
from axfi_lite.datasets import Dataset, load_mnist_idx, make_bars_dataset
from axfi_lite.engine import coarse_plan, forward
from axfi_lite.exceptions import (
    CampaignError,
    ComparisonError,
    ConfigurationError,
    DatasetError,
    EmptyDatasetError,
)
from axfi_lite.metrics import FaultClass
from axfi_lite.model import build_model, default_architecture, quantize_model
from axfi_lite.multipliers import build_exact_lut, build_fixture_lut, load_lut
from axfi_lite.options import CampaignConfig
from axfi_lite.reports import OUTCOMES_FILE
from axfi_lite.sampling import required_sample_size
from axfi_lite.training import train_fixture_model


def _cfg(mode, layer=CONV1, **overrides):
    return CampaignConfig.model_validate({"mode": mode, "compromised_layer": layer, **overrides})


def _dumps(report):
    return [o.model_dump() for o in report.outcomes]


def _with_peaks(report, peaks):
    summaries = [
        s.model_copy(update={"neuron_peaks": list(peaks)}) if s.layer == report.peak_layer else s
        for s in report.layer_summaries
    ]
    return report.model_copy(update={"layer_summaries": summaries})


@pytest.fixture(scope="module")
def small(bars):
    """16 images of the bars dataset."""
    return bars.subset(16, seed=1)


@pytest.fixture(scope="module")
def exact_report(quant_model, small):
    """AxC campaign with the exact LUT at the first conv layer."""
    cfg = _cfg({"kind": "axmult", "lut": {"kind": "exact"}})
    return run_axc_campaign(cfg, model=quant_model, dataset=small)


class TestGoldenRun:
    """Test run_golden()."""

    def test_accuracy_and_traces(self, quant_model, small):
        """Test one trace per image and accuracy from predictions."""
        golden = run_golden(quant_model, small)
        assert len(golden.traces) == len(small)
        assert golden.accuracy == pytest.approx(np.mean(golden.predictions == small.labels))

    def test_empty_dataset(self, quant_model):
        """Test that an empty dataset is rejected."""
        empty = Dataset(images=np.zeros((0, 1, 12, 12)), labels=np.zeros(0))
        with pytest.raises(EmptyDatasetError):
            run_golden(quant_model, empty)

    def test_label_out_of_range(self, quant_model):
        """Test that labels must fit the model's classes."""
        data = Dataset(images=np.zeros((2, 1, 12, 12)), labels=np.array([0, 5]))
        with pytest.raises(DatasetError):
            run_golden(quant_model, data)


class TestAxcCampaign:
    """Test AxC emulation campaigns."""

    def test_exact_lut_is_error_free(self, exact_report):
        """Test that the exact LUT reproduces the golden run."""
        report = exact_report
        assert report.kind == "axc"
        assert report.evaluated_faults == 16
        assert report.class_counts[FaultClass.MASKED] == 16
        assert report.accuracy_drop == 0.0
        assert all(o.metrics.max_difference == 0.0 for o in report.outcomes)
        assert all(s.mean_error == 0.0 and s.max_error == 0.0 for s in report.layer_summaries)
        assert report.summary(CONV1).mean_bitflip_pct == 0.0
        assert len(report.neuron_peaks()) == 400

    def test_idle_suppressor_is_error_free(self, quant_model, small):
        """Test AxMult+ with an exact LUT and probability 0."""
        cfg = _cfg(
            {"kind": "axmult_plus", "lut": {"kind": "exact"}, "suppressor": {"probability": 0.0}}
        )
        report = run_axc_campaign(cfg, model=quant_model, dataset=small)
        assert report.class_counts[FaultClass.MASKED] == len(small)
        assert not report.neuron_peaks().any()

    def test_truncating_lut_adds_error(self, quant_model, small):
        """Test that a coarse LUT produces nonzero error at its layer."""
        cfg = _cfg({"kind": "axmult", "lut": {"kind": "operand_truncate", "param": 4}})
        report = run_axc_campaign(cfg, model=quant_model, dataset=small)
        assert report.summary().max_error > 0
        assert report.neuron_peaks().max() > 0
        assert report.mode_label == "AxMult[operand_truncate(4)]"

    def test_earlier_layers_untouched(self, quant_model, small):
        """Test that approximating layer CONV2 leaves earlier OFMs exact."""
        cfg = _cfg({"kind": "axmult", "lut": {"kind": "operand_truncate", "param": 5}}, CONV2)
        report = run_axc_campaign(cfg, model=quant_model, dataset=small)
        for summary in report.layer_summaries[:CONV2]:
            assert summary.max_error == 0.0
            assert summary.changed_fraction == 0.0

    def test_suppressor_only(self, quant_model, small):
        """Test the suppressor alone on exact products."""
        cfg = _cfg({"kind": "suppressor", "suppressor": {"bit_mask": [7], "probability": 1.0}})
        report = run_axc_campaign(cfg, model=quant_model, dataset=small)
        assert report.mode_label == "Suppressor"
        assert report.evaluated_faults == len(small)

    def test_worker_count_does_not_change_results(self, quant_model, small):
        """Test serial and threaded campaigns agree."""
        mode = {"kind": "axmult_plus", "lut": {"kind": "operand_truncate", "param": 2}}
        serial = run_axc_campaign(_cfg(mode, workers=1), model=quant_model, dataset=small)
        threaded = run_axc_campaign(_cfg(mode, workers=3), model=quant_model, dataset=small)
        assert _dumps(serial) == _dumps(threaded)
        np.testing.assert_array_equal(serial.neuron_peaks(), threaded.neuron_peaks())

    def test_axmult_on_relu(self, quant_model, small):
        """Test that AxMult needs a multiplying layer."""
        cfg = _cfg({"kind": "axmult", "lut": {"kind": "exact"}}, RELU1)
        with pytest.raises(ConfigurationError):
            run_axc_campaign(cfg, model=quant_model, dataset=small)

    def test_rejects_fi_mode(self, quant_model, small):
        """Test mode checking."""
        with pytest.raises(ConfigurationError):
            run_axc_campaign(_cfg({"kind": "fi"}), model=quant_model, dataset=small)

    def test_layer_out_of_range(self, quant_model, small):
        """Test compromised-layer bounds."""
        cfg = _cfg({"kind": "suppressor"}, 10)
        with pytest.raises(ConfigurationError):
            run_axc_campaign(cfg, model=quant_model, dataset=small)

    def test_preloaded_lut(self, quant_model, small):
        """Test that an explicit table overrides the config's LUT."""
        cfg = _cfg({"kind": "axmult", "lut": {"kind": "exact"}})
        lut = build_fixture_lut("product_offset", 300)
        report = run_axc_campaign(cfg, model=quant_model, dataset=small, lut=lut)
        assert report.summary().max_error > 0


class TestFiCampaign:
    """Test fault-injection campaigns."""

    def test_single_weight_faults(self, quant_model, small):
        """Test class counts and the masked-fault invariant."""
        cfg = _cfg({"kind": "fi", "fault_model": "single"}, CONV2, sample_size=40, master_seed=3)
        report = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert report.evaluated_faults == 40
        assert sum(report.class_counts.values()) == 40
        assert [o.fault_id for o in report.outcomes] == list(range(40))
        assert all(o.image_index == o.fault_id % len(small) for o in report.outcomes)
        for outcome in report.outcomes:
            assert outcome.fault.layer_id == CONV2
            if outcome.fault_class == FaultClass.MASKED:
                assert not outcome.changed[-1]
            else:
                assert outcome.changed[-1]
        assert report.mode_accuracy == pytest.approx(np.mean([o.correct for o in report.outcomes]))

    def test_deterministic(self, quant_model, small):
        """Test that a config reproduces its report."""
        cfg = _cfg({"kind": "fi", "fault_model": "single"}, DENSE, sample_size=20, master_seed=9)
        a = run_fi_campaign(cfg, model=quant_model, dataset=small)
        b = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert _dumps(a) == _dumps(b)

    def test_float_path(self, float_model, small):
        """Test float32 weight faults: classes partition the outcomes."""
        cfg = _cfg(
            {"kind": "fi", "fault_model": "single", "site": "weight_f32"},
            sample_size=30,
            float_eps=0.0,
        )
        report = run_fi_campaign(cfg, model=float_model, dataset=small)
        assert report.path == "float"
        assert sum(report.class_counts.values()) == 30
        assert all(o.layer_bitflips is None for o in report.outcomes)
        for outcome in report.outcomes:
            if outcome.fault_class == FaultClass.MASKED:
                assert not outcome.changed[-1]

    def test_zero_faults(self, quant_model, small):
        """Test that an empty fault list keeps the golden accuracy."""
        cfg = _cfg({"kind": "fi", "fault_model": "single"}, sample_size=0)
        report = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert report.evaluated_faults == 0
        assert report.mode_accuracy == report.golden_accuracy
        assert report.masked_depth.count == 0

    def test_ofm_rate(self, quant_model, small):
        """Test that a 10% OFM rate flips exactly 10% of the layer's bits."""
        cfg = _cfg(
            {"kind": "fi", "fault_model": "rate", "site": "ofm_i8", "rate": 0.1},
            faults_per_image=2,
        )
        report = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert report.evaluated_faults == 2 * len(small)
        assert all(o.layer_bitflips[CONV1] == 10.0 for o in report.outcomes)
        assert report.summary(CONV1).mean_bitflip_pct == 10.0
        assert report.summary(CONV2).mean_bitflip_pct > 0
        assert len(report.repetition_accuracies) == 2

    def test_weight_rate_repetitions(self, quant_model, small):
        """Test one faulty model per repetition, evaluated on every image."""
        cfg = _cfg(
            {"kind": "fi", "fault_model": "rate", "site": "weight_i8", "rate": 0.05},
            CONV2,
            faults_per_image=3,
        )
        report = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert report.evaluated_faults == 3 * len(small)
        assert len(report.repetition_accuracies) == 3
        assert report.mode_accuracy == pytest.approx(np.mean(report.repetition_accuracies))
        assert len({o.fault.seed for o in report.outcomes}) == 3

    def test_rejects_axc_mode(self, quant_model, small):
        """Test mode checking."""
        with pytest.raises(ConfigurationError):
            run_fi_campaign(_cfg({"kind": "suppressor"}), model=quant_model, dataset=small)

    def test_rejects_non_multiplying_layer(self, quant_model, small):
        """Test that FI targets Conv2D/Dense layers."""
        cfg = _cfg({"kind": "fi", "fault_model": "single"}, RELU1, sample_size=1)
        with pytest.raises(ConfigurationError):
            run_fi_campaign(cfg, model=quant_model, dataset=small)

    def test_dispatch(self, quant_model, small):
        """Test run_campaign() picks the campaign by mode."""
        cfg = _cfg({"kind": "fi", "fault_model": "single"}, sample_size=4)
        assert run_campaign(cfg, model=quant_model, dataset=small).kind == "fi"
        axc = _cfg({"kind": "axmult", "lut": {"kind": "exact"}})
        assert run_campaign(axc, model=quant_model, dataset=small).kind == "axc"

    def test_plan_fault_count(self, quant_model):
        """Test explicit, per-image and statistical fault counts."""
        single = {"kind": "fi", "fault_model": "single"}
        assert plan_fault_count(_cfg(single, sample_size=7), quant_model, 10) == 7
        assert plan_fault_count(_cfg(single, faults_per_image=3), quant_model, 10) == 30
        assert plan_fault_count(_cfg(single), quant_model, 10) == required_sample_size(
            36 * 8, 0.05, 0.95, 0.5
        )


class TestResume:
    """Test checkpointed campaigns."""

    def _truncate(self, run_dir, keep):
        path = run_dir / OUTCOMES_FILE
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:keep]) + "\n" + lines[keep][:25])

    def test_axc_resume(self, quant_model, small, tmp_path):
        """Test that an interrupted AxC campaign resumes to the same report."""
        cfg = _cfg(
            {"kind": "axmult_plus", "lut": {"kind": "operand_truncate", "param": 3}},
            output_dir=str(tmp_path / "run"),
        )
        first = run_axc_campaign(cfg, model=quant_model, dataset=small)
        self._truncate(tmp_path / "run", 5)
        second = run_axc_campaign(cfg, model=quant_model, dataset=small)
        assert second.runtime.resumed_items == 5
        assert _dumps(first) == _dumps(second)
        np.testing.assert_array_equal(first.neuron_peaks(), second.neuron_peaks())

    def test_fi_resume_reuses_fault_list(self, quant_model, small, tmp_path):
        """Test that a resumed FI campaign keeps its sampled faults."""
        cfg = _cfg(
            {"kind": "fi", "fault_model": "single"},
            CONV2,
            sample_size=12,
            output_dir=str(tmp_path / "run"),
        )
        first = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert (tmp_path / "run" / "faults.json").exists()
        self._truncate(tmp_path / "run", 4)
        second = run_fi_campaign(cfg, model=quant_model, dataset=small)
        assert second.runtime.resumed_items == 4
        assert _dumps(first) == _dumps(second)

    def test_other_config_rejected(self, quant_model, small, tmp_path):
        """Test that a run directory belongs to one config."""
        mode = {"kind": "axmult", "lut": {"kind": "exact"}}
        run_axc_campaign(
            _cfg(mode, output_dir=str(tmp_path)), model=quant_model, dataset=small
        )
        with pytest.raises(CampaignError):
            run_axc_campaign(
                _cfg(mode, output_dir=str(tmp_path), master_seed=1),
                model=quant_model,
                dataset=small,
            )


class TestCompare:
    """Test protection-set comparison."""

    def test_self_comparison(self, exact_report):
        """Test that a report fully recalls itself."""
        result = compare_campaigns(exact_report, exact_report, 0.0)
        assert result.recall == 1.0
        assert result.jaccard == 1.0
        assert result.neuron_count == 400

    def test_superset_and_disjoint(self, exact_report):
        """Test recall and Jaccard on crafted peaks."""
        fi = _with_peaks(exact_report, [0.1, 0.9, 0.5, 0.7])
        superset = compare_campaigns(fi, _with_peaks(exact_report, [0.8, 0.9, 0.1, 0.7]), 0.6)
        assert superset.reference == [1, 3]
        assert superset.candidate == [0, 1, 3]
        assert superset.recall == 1.0
        assert superset.jaccard == pytest.approx(2 / 3)
        disjoint = compare_campaigns(fi, _with_peaks(exact_report, [0.9, 0.1, 0.1, 0.1]), 0.6)
        assert disjoint.recall == 0.0
        assert disjoint.jaccard == 0.0

    def test_layer_mismatch(self, exact_report):
        """Test that reports must measure the same layer."""
        other = exact_report.model_copy(update={"compromised_layer": CONV2})
        with pytest.raises(ComparisonError):
            compare_campaigns(exact_report, other, 0.5)

    def test_measured_layer_mismatch(self, exact_report):
        """Test that peaks taken at different downstream layers are not compared."""
        other = exact_report.model_copy(update={"measured_layer": CONV2})
        with pytest.raises(ComparisonError, match="measured"):
            compare_campaigns(exact_report, other, 0.5)

    def test_downstream_measurement(self, quant_model, small):
        """Test FI and AxC peaks measured past the compromised layer."""
        fi = run_fi_campaign(
            _cfg({"kind": "fi", "fault_model": "single"}, sample_size=20, measured_layer=CONV2),
            model=quant_model,
            dataset=small,
        )
        axc = run_axc_campaign(
            _cfg({"kind": "axmult", "lut": {"kind": "exact"}}, measured_layer=CONV2),
            model=quant_model,
            dataset=small,
        )
        assert fi.peak_layer == CONV2
        assert len(fi.neuron_peaks()) == 54
        result = compare_campaigns(fi, axc, 0.0)
        assert result.layer == CONV2
        assert result.neuron_count == 54
        assert result.candidate == []

    def test_size_mismatch(self, exact_report):
        """Test that neuron counts must agree."""
        with pytest.raises(ComparisonError):
            compare_campaigns(exact_report, _with_peaks(exact_report, [0.1, 0.2]), 0.5)

    def test_protection_set_and_threshold_for_size(self):
        """Test threshold selection for a target set size."""
        peaks = np.array([0.1, 0.9, 0.5, 0.7])
        assert protection_set(peaks, 0.6) == {1, 3}
        assert protection_set(peaks, threshold_for_size(peaks, 2)) == {1, 3}
        with pytest.raises(ConfigurationError):
            threshold_for_size(peaks, 5)


class TestHistogram:
    """Test histogram()."""

    def test_right_closed_bins(self):
        """Test [0, 0.5, 1] in two bins."""
        hist = histogram([0.0, 0.5, 1.0], 2, (0.0, 1.0))
        assert hist.counts == [2, 1]
        assert hist.edges == [0.0, 0.5, 1.0]

    def test_empty(self):
        """Test that no values give zero counts."""
        hist = histogram([], 3, (0.0, 1.0))
        assert hist.counts == [0, 0, 0]
        assert hist.total == 0

    def test_non_finite_and_out_of_range(self):
        """Test sentinel and out-of-range tallies."""
        hist = histogram([np.inf, -np.inf, np.nan, 5.0, 0.2], 2, (0.0, 1.0))
        assert hist.counts == [1, 0]
        assert hist.sentinel == 3
        assert hist.out_of_range == 1

    def test_invalid_arguments(self):
        """Test bin count and range validation."""
        with pytest.raises(ConfigurationError):
            histogram([1.0], 0, (0.0, 1.0))
        with pytest.raises(ConfigurationError):
            histogram([1.0], 2, (1.0, 1.0))


class TestOverhead:
    """Test metric overhead measurement."""

    def test_ratios_positive(self, quant_model, bars):
        """Test one entry per layer with positive overheads."""
        report = measure_metric_overhead(quant_model, bars.images[:2], repeats=2)
        assert len(report.layers) == len(quant_model.layers)
        for layer in report.layers:
            assert set(layer.overhead_pct) == {"max_difference", "psnr", "ssim"}
            assert all(v > 0 for v in layer.overhead_pct.values())
            assert layer.forward_seconds > 0

    def test_float_path(self, float_model, bars):
        """Test measurement on the float path."""
        report = measure_metric_overhead(float_model, bars.images[:1], path="float", repeats=1)
        assert report.path == "float"
        assert report.layers[CONV1].numel == 400

    def test_invalid(self, float_model, bars):
        """Test argument validation."""
        with pytest.raises(EmptyDatasetError):
            measure_metric_overhead(float_model, bars.images[:0], path="float")
        with pytest.raises(ConfigurationError):
            measure_metric_overhead(float_model, bars.images[:1], path="quant")
        with pytest.raises(ConfigurationError):
            measure_metric_overhead(float_model, bars.images[:1], path="float", repeats=0)


class TestSweep:
    """Test the coarse-grain multiplier sweep."""

    def test_entries(self, quant_model, small):
        """Test one entry per LUT and zero loss for the exact table."""
        luts = [build_exact_lut(), *(build_fixture_lut("operand_truncate", k) for k in (1, 3, 6))]
        report = run_multiplier_sweep(quant_model, small, luts)
        assert [e.name for e in report.entries] == [
            "exact",
            "operand_truncate(1)",
            "operand_truncate(3)",
            "operand_truncate(6)",
        ]
        assert report.entries[0].accuracy == report.exact_accuracy
        assert report.entries[0].accuracy_loss == 0.0
        maes = [e.mae_pct for e in report.entries]
        assert maes == sorted(maes)
        if report.spearman_mae_loss is not None:
            assert -1.0 <= report.spearman_mae_loss <= 1.0

    def test_empty_dataset(self, quant_model):
        """Test that sweeps need data."""
        empty = Dataset(images=np.zeros((0, 1, 12, 12)), labels=np.zeros(0))
        with pytest.raises(EmptyDatasetError):
            run_multiplier_sweep(quant_model, empty, [build_exact_lut()])


# ========== Campaign-scale trends ==========


def _best_seconds(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


@pytest.fixture(scope="module")
def conv2_faults(float_model, small):
    """1000 single float32 weight faults in the second conv layer."""
    cfg = _cfg(
        {"kind": "fi", "fault_model": "single", "site": "weight_f32"},
        CONV2,
        sample_size=1000,
        float_eps=0.0,
        master_seed=17,
    )
    return run_fi_campaign(cfg, model=float_model, dataset=small)


@pytest.fixture(scope="module")
def lenet_like():
    """Default two-conv architecture on 28x28 bars, quantized, with 160 images."""
    data = make_bars_dataset(160, seed=21)
    model = build_model(default_architecture(2), (1, 28, 28), 2, seed=4)
    return quantize_model(model, data.images[:32]), data


@pytest.mark.slow
class TestTrends:
    """Seed-pinned trends over campaign-sized samples."""

    def test_masked_faults_stop_before_logits(self, conv2_faults):
        """Test that every Masked fault leaves the logits untouched and has depth <= 0."""
        assert sum(conv2_faults.class_counts.values()) == 1000
        masked = [o for o in conv2_faults.outcomes if o.fault_class == FaultClass.MASKED]
        assert masked
        for outcome in masked:
            assert not outcome.changed[-1]
            assert outcome.depth <= 0
        assert conv2_faults.masked_depth.within_0 == 1.0

    def test_masked_faults_die_within_one_stage(self, float_model, small):
        """Test that Masked faults in the first conv layer fade within one stage."""
        cfg = _cfg(
            {"kind": "fi", "fault_model": "single", "site": "weight_f32"},
            CONV1,
            sample_size=1000,
            float_eps=0.0,
            master_seed=17,
        )
        report = run_fi_campaign(cfg, model=float_model, dataset=small)
        assert report.masked_depth.count > 0
        assert report.masked_depth.within_1 >= 0.9

    def test_metrics_separate_critical_from_masked(self, conv2_faults):
        """Test that Critical faults have lower SSIM and larger max difference than Masked ones."""
        outcomes = conv2_faults.outcomes
        critical = [o.metrics for o in outcomes if o.fault_class == FaultClass.CRITICAL]
        masked = [o.metrics for o in outcomes if o.fault_class == FaultClass.MASKED]
        assert critical and masked
        assert np.median([m.ssim for m in masked]) > np.median([m.ssim for m in critical])
        assert np.median([m.max_difference for m in critical]) > np.median(
            [m.max_difference for m in masked]
        )

    def test_axc_recalls_fi_protection_set(self, lenet_like):
        """Test that AxMult+ in Conv1 flags most neurons that Conv1 weight faults hit at Conv2."""
        model, data = lenet_like
        fi = run_fi_campaign(
            _cfg(
                {"kind": "fi", "fault_model": "rate", "site": "weight_i8", "rate": 0.1},
                0,
                faults_per_image=1,
                measured_layer=3,
                master_seed=5,
            ),
            model=model,
            dataset=data,
        )
        axc = run_axc_campaign(
            _cfg(
                {"kind": "axmult_plus", "lut": {"kind": "operand_truncate", "param": 3}},
                0,
                measured_layer=3,
                master_seed=5,
            ),
            model=model,
            dataset=data,
        )
        peaks = fi.neuron_peaks()
        assert peaks.size == 1024
        threshold = threshold_for_size(peaks, 50)
        result = compare_campaigns(fi, axc, threshold)
        assert 20 <= len(result.reference) <= 100
        assert result.recall >= 0.8

    def test_lut_inference_cost(self, quant_model, bars):
        """Test that table lookups stay within 5x of native integer multiplies."""
        images = bars.images[:20]
        plan = coarse_plan(quant_model, build_exact_lut())
        native = _best_seconds(lambda: [forward(quant_model, x) for x in images])
        lut = _best_seconds(lambda: [forward(quant_model, x, plan=plan) for x in images])
        assert lut <= 5.0 * native

    def test_campaign_cost_scales_linearly(self, quant_model, small):
        """Test that the per-fault cost does not grow with the fault count."""

        def per_fault(n):
            cfg = _cfg(
                {"kind": "fi", "fault_model": "single"}, CONV2, sample_size=n, master_seed=2
            )
            return min(
                run_fi_campaign(cfg, model=quant_model, dataset=small).runtime.seconds_per_item
                for _ in range(3)
            )

        assert per_fault(400) <= 1.2 * per_fault(100)


@pytest.mark.slow
@requires_mnist
@requires_evoapprox
def test_library_sweep_ranks_loss_by_mae():
    """Test that accuracy loss across the library circuits follows their MAE."""
    lut_dir = external_dir(EVOAPPROX_DIR_ENV)
    luts = [load_lut(path) for path in sorted(lut_dir.glob("mul8s_*.axlut"))]
    if len(luts) < 3:
        pytest.skip(f"Need at least 3 library LUTs in {lut_dir}")
    root = external_dir(MNIST_DIR_ENV)
    mnist = load_mnist_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")
    model = train_fixture_model(mnist.subset(5000, seed=0), epochs=2, seed=0)
    report = run_multiplier_sweep(model, mnist.subset(1000, seed=1), luts)
    assert report.spearman_mae_loss is not None
    assert report.spearman_mae_loss >= 0.8
