"""Command-line interface.

Exit codes: 0 on success, 1 on usage errors (unknown flags, missing
arguments), 2 on data errors (bad files, invalid configs, failed checks).
Logs go to stderr; stdout carries only command output.

Example:
    ```
    axfi sample-size --N 1000000 --e 0.01 --conf 0.99 --p 0.5
    axfi --seed 7 fi-run configs/fi_rate.json
    axfi compare runs/fi-.../run.json runs/axmult_plus-.../run.json --threshold 0.7
    axfi report runs/fi-.../run.json --hist ssim --bins 20
    ```
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pydantic
import scipy
from pydantic import ValidationError

from axfi_lite import __version__
from axfi_lite.campaign import (
    accuracy_with_plan,
    compare_campaigns,
    histogram,
    measure_metric_overhead,
    run_axc_campaign,
    run_fi_campaign,
    run_multiplier_sweep,
    threshold_for_size,
)
from axfi_lite.characterization import characterize
from axfi_lite.datasets import Dataset, load_mnist_idx, make_bars_dataset
from axfi_lite.engine import coarse_plan, forward
from axfi_lite.exceptions import AxfiError, ConfigurationError
from axfi_lite.executors import make_executor
from axfi_lite.metrics import FaultClass
from axfi_lite.model import NetworkModel, load_model, quantize_model
from axfi_lite.multipliers import MultiplierLUT, build_exact_lut, build_fixture_lut, load_lut, save_lut
from axfi_lite.options import CampaignConfig, SweepConfig
from axfi_lite.reports import (
    CampaignReport,
    RunManifest,
    load_report,
    save_report,
    write_histogram_csv,
    write_outcomes_csv,
)
from axfi_lite.sampling import required_sample_size
from axfi_lite.training import train_fixture_model
from axfi_lite.utils import file_checksum

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

FIXTURE_KINDS = ("operand_truncate", "product_offset", "product_zero_lsb")
HIST_METRICS = ("max_difference", "psnr_db", "ssim", "depth")


class UsageError(Exception):
    """Raised instead of argparse's exit so usage errors map to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ===== Shared helpers =====


def parse_lut_spec(spec: str) -> MultiplierLUT:
    """A LUT file path, ``exact``, or ``<fixture kind>:<param>``.

    Example:
        ```python
        parse_lut_spec("operand_truncate:3")
        parse_lut_spec("luts/mul8s_1L12.axlut")
        ```
    """
    if spec == "exact":
        return build_exact_lut()
    kind, sep, param = spec.partition(":")
    if sep and kind in FIXTURE_KINDS:
        try:
            return build_fixture_lut(kind, int(param))
        except ValueError as e:
            raise ConfigurationError(f"Fixture parameter must be an integer: {spec!r}") from e
    return load_lut(spec)


def _versions() -> dict[str, str]:
    return {
        "axfi_lite": __version__,
        "numpy": np.__version__,
        "pydantic": pydantic.VERSION,
        "scipy": scipy.__version__,
    }


def _checksums(paths: Sequence[Path | str | None]) -> dict[str, str]:
    return {str(p): file_checksum(p) for p in paths if p is not None and Path(p).is_file()}


def _write_manifest(
    path: Path,
    args: argparse.Namespace,
    argv: Sequence[str],
    inputs: Sequence[Path | str | None],
    outputs: dict[str, Path],
    seeds: dict[str, int],
    config_path: str | None = None,
    config_hash: str | None = None,
) -> Path:
    manifest = RunManifest(
        command=args.command,
        argv=list(argv),
        config_path=config_path,
        config_hash=config_hash,
        seeds=seeds,
        versions=_versions(),
        input_checksums=_checksums(inputs),
        outputs={name: str(p) for name, p in outputs.items()},
    )
    return save_report(manifest, path)


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("dataset")
    group.add_argument("--images", type=Path, help="IDX image file")
    group.add_argument("--labels", type=Path, help="IDX label file")
    group.add_argument(
        "--bars", type=int, metavar="N", help="Use N synthetic two-class bar images instead"
    )
    group.add_argument("--subset", type=int, metavar="N", help="Seed-pinned subset size")


def _load_dataset(args: argparse.Namespace, seed: int) -> Dataset:
    if args.bars is not None:
        dataset = make_bars_dataset(args.bars, seed=seed)
    elif args.images is not None and args.labels is not None:
        dataset = load_mnist_idx(args.images, args.labels)
    else:
        raise UsageError("Give --images and --labels, or --bars N")
    return dataset.subset(args.subset, seed)


def _ensure_quantized(model: NetworkModel, dataset: Dataset) -> NetworkModel:
    if model.is_quantized:
        return model
    logger.info("Model is not quantized; calibrating on the given images")
    return quantize_model(model, calibration=dataset.images)


def _print_rows(rows: Sequence[tuple[str, str]]) -> None:
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")


def _load_campaign_report(path: Path) -> CampaignReport:
    """A campaign report, or the report a run manifest points to."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and "command" in data:
        manifest = RunManifest.model_validate(data)
        return load_report(manifest.output("report", Path(path).parent))
    return load_report(path)


# ===== Commands =====


def cmd_characterize(args: argparse.Namespace, argv: Sequence[str]) -> int:
    report = characterize(parse_lut_spec(args.lut))
    if args.json:
        print(report.model_dump_json(indent=2))
        return EXIT_OK
    _print_rows(
        [
            ("multiplier", report.name),
            ("MAE", f"{report.mae:.4f} ({report.mae_pct:.4f}%)"),
            ("AWCE", f"{report.awce:.0f} ({report.awce_pct:.4f}%)"),
            ("MRE", f"{report.mre_pct:.4f}%"),
            ("mean ED", f"{report.mean_ed:.4f}"),
            ("Var-ED", f"{report.var_ed:.4f}"),
            ("RMS-ED", f"{report.rms_ed:.4f}"),
        ]
    )
    return EXIT_OK


def cmd_save_lut(args: argparse.Namespace, argv: Sequence[str]) -> int:
    if args.kind == "exact":
        lut = build_exact_lut()
    elif args.param is None:
        raise UsageError(f"LUT kind {args.kind} needs a param")
    else:
        lut = build_fixture_lut(args.kind, args.param)
    save_lut(lut, args.path)
    print(args.path)
    return EXIT_OK


def cmd_train_fixture(args: argparse.Namespace, argv: Sequence[str]) -> int:
    seed = args.seed if args.seed is not None else 0
    dataset = _load_dataset(args, seed)
    model = train_fixture_model(dataset, epochs=args.epochs, seed=seed, output=args.output)
    manifest_path = args.output.with_name(f"{args.output.stem}.run.json")
    _write_manifest(
        manifest_path,
        args,
        argv,
        [args.images, args.labels],
        {"model": args.output, "blob": args.output.with_suffix(".bin")},
        {"seed": seed},
    )
    print(f"test accuracy {model.metadata['test_accuracy']:.4f}")
    print(args.output)
    return EXIT_OK


def cmd_infer(args: argparse.Namespace, argv: Sequence[str]) -> int:
    seed = args.seed if args.seed is not None else 0
    dataset = _load_dataset(args, seed)
    model = load_model(args.model)
    plan = None
    if args.path == "quant":
        model = _ensure_quantized(model, dataset)
        if args.lut is not None:
            plan = coarse_plan(model, parse_lut_spec(args.lut))
    elif args.lut is not None:
        raise ConfigurationError("--lut needs the quant path")
    executor = make_executor(args.workers or 1)
    if args.path == "float":
        preds = list(
            executor.map(lambda x: forward(model, x, path="float").prediction, dataset.images)
        )
        accuracy = float(np.mean(np.asarray(preds) == dataset.labels))
    else:
        accuracy = accuracy_with_plan(model, dataset, plan, executor)
    print(f"accuracy {accuracy:.4f} on {len(dataset)} images ({args.path})")
    return EXIT_OK


def _campaign_config(args: argparse.Namespace) -> CampaignConfig:
    cfg = CampaignConfig.from_file(args.config)
    updates: dict = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if args.progress:
        updates["show_progress"] = True
    return cfg.with_updates(**updates)


def _run_campaign_command(
    args: argparse.Namespace,
    argv: Sequence[str],
    runner: Callable[..., CampaignReport],
    want_fi: bool,
) -> int:
    cfg = _campaign_config(args)
    if cfg.is_fi != want_fi:
        raise ConfigurationError(
            f"{args.command} cannot run a {cfg.mode.kind!r} config; "
            f"use {'axc-run' if want_fi else 'fi-run'}"
        )
    run_dir = cfg.run_dir()
    report = runner(cfg, run_dir=run_dir)
    report_path = save_report(report, run_dir / "report.json")
    csv_path = write_outcomes_csv(report, run_dir / "outcomes.csv")
    lut_path = getattr(getattr(cfg.mode, "lut", None), "path", None)
    _write_manifest(
        run_dir / "run.json",
        args,
        argv,
        [args.config, cfg.model_path, cfg.dataset_images, cfg.dataset_labels, lut_path],
        {"report": Path("report.json"), "outcomes": Path("outcomes.csv")},
        {"master_seed": cfg.master_seed, "subset_seed": cfg.subset_seed},
        config_path=str(args.config),
        config_hash=cfg.content_hash(),
    )
    counts = ", ".join(f"{cls.value} {n}" for cls, n in report.class_counts.items())
    _print_rows(
        [
            ("mode", report.mode_label),
            ("layer", str(report.compromised_layer)),
            ("golden accuracy", f"{report.golden_accuracy:.4f}"),
            ("mode accuracy", f"{report.mode_accuracy:.4f}"),
            ("accuracy drop", f"{report.accuracy_drop:.4f}"),
            ("outcomes", f"{report.evaluated_faults} ({counts})"),
            ("report", str(report_path)),
            ("csv", str(csv_path)),
        ]
    )
    return EXIT_OK


def cmd_fi_run(args: argparse.Namespace, argv: Sequence[str]) -> int:
    return _run_campaign_command(args, argv, run_fi_campaign, want_fi=True)


def cmd_axc_run(args: argparse.Namespace, argv: Sequence[str]) -> int:
    return _run_campaign_command(args, argv, run_axc_campaign, want_fi=False)


def cmd_compare(args: argparse.Namespace, argv: Sequence[str]) -> int:
    fi_report = _load_campaign_report(args.fi_report)
    axc_report = _load_campaign_report(args.axc_report)
    if args.threshold is not None:
        threshold = args.threshold
    elif args.fi_size is not None:
        threshold = threshold_for_size(fi_report.neuron_peaks(), args.fi_size)
    else:
        raise UsageError("Give --threshold or --fi-size")
    result = compare_campaigns(fi_report, axc_report, threshold)
    if args.output is not None:
        save_report(result, args.output)
    _print_rows(
        [
            ("threshold", f"{result.threshold:.6g}"),
            ("neurons", str(result.neuron_count)),
            (f"FI set ({result.reference_label})", str(len(result.reference))),
            (f"AxC set ({result.candidate_label})", str(len(result.candidate))),
            ("recall", f"{result.recall:.3f}"),
            ("jaccard", f"{result.jaccard:.3f}"),
        ]
    )
    return EXIT_OK


def cmd_sample_size(args: argparse.Namespace, argv: Sequence[str]) -> int:
    print(required_sample_size(args.N, args.e, args.conf, args.p))
    return EXIT_OK


def cmd_report(args: argparse.Namespace, argv: Sequence[str]) -> int:
    report = _load_campaign_report(args.run)
    if args.hist is None:
        depth = report.masked_depth
        rows = [
            ("mode", report.mode_label),
            ("dataset", f"{report.dataset_name} ({report.dataset_size} images)"),
            ("golden accuracy", f"{report.golden_accuracy:.4f}"),
            ("mode accuracy", f"{report.mode_accuracy:.4f}"),
            ("accuracy drop", f"{report.accuracy_drop:.4f}"),
        ]
        rows += [(f"class {cls.value}", str(n)) for cls, n in report.class_counts.items()]
        if depth.count:
            rows.append(("masked depth <= 0", f"{depth.within_0:.4f}"))
            if depth.within_1 is not None:
                rows.append(("masked depth <= 1", f"{depth.within_1:.4f}"))
        runtime = report.runtime
        rows.append(
            (
                "runtime",
                f"{runtime.campaign_seconds:.2f}s, "
                f"{1000.0 * runtime.seconds_per_item:.3f} ms/item",
            )
        )
        for summary in report.layer_summaries:
            flips = (
                f", bitflips {summary.mean_bitflip_pct:.2f}%"
                if summary.mean_bitflip_pct is not None
                else ""
            )
            rows.append(
                (
                    f"layer {summary.layer} {summary.kind}",
                    f"mean error {summary.mean_error:.4g}, max {summary.max_error:.4g}{flips}",
                )
            )
        _print_rows(rows)
        return EXIT_OK

    fault_class = FaultClass(args.fault_class) if args.fault_class else None
    values = report.metric_values(args.hist, fault_class)
    if args.range is not None:
        lo, hi = args.range
    else:
        finite = [v for v in values if np.isfinite(v)]
        lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
        if hi <= lo:
            hi = lo + 1.0
    hist = histogram(values, args.bins, (lo, hi))
    if args.csv is not None:
        write_histogram_csv(hist, args.csv)
    print("bin_left,bin_right,count")
    for left, right, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
        print(f"{left:.6g},{right:.6g},{count}")
    if hist.sentinel or hist.out_of_range:
        print(f"# non-finite {hist.sentinel}, out of range {hist.out_of_range}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = SweepConfig.from_file(args.config)
    model = load_model(cfg.model_path)
    dataset = load_mnist_idx(cfg.dataset_images, cfg.dataset_labels).subset(
        cfg.subset_size, cfg.subset_seed
    )
    model = _ensure_quantized(model, dataset)
    executor = make_executor(args.workers or cfg.workers)
    result = run_multiplier_sweep(model, dataset, [lut.load() for lut in cfg.luts], executor)
    if args.output is not None:
        save_report(result, args.output)
    rows = [("exact", f"accuracy {result.exact_accuracy:.4f}")]
    rows += [
        (
            entry.name,
            f"accuracy {entry.accuracy:.4f}, loss {entry.accuracy_loss:+.4f}, "
            f"MAE {entry.mae_pct:.4f}%, AWCE {entry.awce_pct:.4f}%",
        )
        for entry in result.entries
    ]
    if result.spearman_mae_loss is not None:
        rows.append(("spearman(MAE, loss)", f"{result.spearman_mae_loss:.3f}"))
    _print_rows(rows)
    return EXIT_OK


def cmd_overhead(args: argparse.Namespace, argv: Sequence[str]) -> int:
    seed = args.seed if args.seed is not None else 0
    dataset = _load_dataset(args, seed)
    model = load_model(args.model)
    if args.path == "quant":
        model = _ensure_quantized(model, dataset)
    result = measure_metric_overhead(model, dataset.images, args.path, args.repeats)
    if args.output is not None:
        save_report(result, args.output)
    rows = []
    for layer in result.layers:
        parts = ", ".join(
            f"{name} {layer.overhead_pct[name]:.1f}% (sd {layer.overhead_pct_std[name]:.1f})"
            for name in layer.overhead_pct
        )
        rows.append((f"layer {layer.layer} {layer.kind} [{layer.numel}]", parts))
    _print_rows(rows)
    return EXIT_OK


# ===== Parser =====


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="axfi", description="Approximate-computing fault-injection workbench")
    parser.add_argument("--version", action="version", version=f"axfi {__version__}")
    parser.add_argument("--seed", type=int, help="Master seed for every random choice")
    parser.add_argument("--workers", type=int, help="Parallel workers (results unaffected)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("characterize", help="Error metrics of a multiplier over all operand pairs")
    p.add_argument("lut", help="LUT file, 'exact', or '<fixture kind>:<param>'")
    p.add_argument("--json", action="store_true", help="Print the report as JSON")
    p.set_defaults(handler=cmd_characterize)

    p = sub.add_parser("save-lut", help="Write a built-in multiplier as a LUT file")
    p.add_argument("kind", choices=("exact", *FIXTURE_KINDS))
    p.add_argument("param", type=int, nargs="?")
    p.add_argument("path", type=Path)
    p.set_defaults(handler=cmd_save_lut)

    p = sub.add_parser("train-fixture", help="Train the small fixture CNN")
    _add_dataset_args(p)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--output", type=Path, required=True, help="Model manifest path")
    p.set_defaults(handler=cmd_train_fixture)

    p = sub.add_parser("infer", help="Top-1 accuracy of a model")
    p.add_argument("model", type=Path, help="Model manifest")
    _add_dataset_args(p)
    p.add_argument("--path", choices=("float", "quant"), default="quant")
    p.add_argument("--lut", help="Multiplier for every multiplying layer (quant path)")
    p.set_defaults(handler=cmd_infer)

    for name, handler, text in (
        ("fi-run", cmd_fi_run, "Run a fault-injection campaign"),
        ("axc-run", cmd_axc_run, "Run an approximate-computing emulation campaign"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path, help="Campaign config JSON")
        p.add_argument("--output-dir", type=Path, help="Run directory (default: content-hash named)")
        p.add_argument("--progress", action="store_true", help="Show a progress bar")
        p.set_defaults(handler=handler)

    p = sub.add_parser("compare", help="Protection sets of an FI and an AxC campaign")
    p.add_argument("fi_report", type=Path, help="FI report or run manifest")
    p.add_argument("axc_report", type=Path, help="AxC report or run manifest")
    p.add_argument("--threshold", type=float, help="Peak normalized error threshold")
    p.add_argument("--fi-size", type=int, help="Pick the threshold so FI flags this many neurons")
    p.add_argument("--output", type=Path, help="Write the comparison as JSON")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("sample-size", help="Statistical FI sample size")
    p.add_argument("--N", type=int, required=True, help="Population size")
    p.add_argument("--e", type=float, required=True, help="Margin of error")
    p.add_argument("--conf", type=float, required=True, help="Confidence (0.90, 0.95, 0.99)")
    p.add_argument("--p", type=float, default=0.5, help="Estimated failure probability")
    p.set_defaults(handler=cmd_sample_size)

    p = sub.add_parser("report", help="Summary or metric histogram of a campaign")
    p.add_argument("run", type=Path, help="Run manifest or report JSON")
    p.add_argument("--hist", choices=HIST_METRICS, help="Metric to histogram")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--class", dest="fault_class", choices=[c.value for c in FaultClass])
    p.add_argument("--csv", type=Path, help="Write the histogram as CSV")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("sweep", help="Deploy several multipliers network-wide")
    p.add_argument("config", type=Path, help="Sweep config JSON")
    p.add_argument("--output", type=Path)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("overhead", help="Metric cost relative to layer forward time")
    p.add_argument("model", type=Path)
    _add_dataset_args(p)
    p.add_argument("--path", choices=("float", "quant"), default="quant")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--output", type=Path)
    p.set_defaults(handler=cmd_overhead)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args, argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"axfi: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (AxfiError, ValidationError, OSError, json.JSONDecodeError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"axfi {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
