"""Command-line interface: ``ssa-cpd <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

import pandas as pd
import pydantic
from dotenv import load_dotenv

from ssa_changepoint.config import (
    PipelineConfig,
    env_jobs,
    env_log_level,
    parse_model,
)
from ssa_changepoint.cusum import CusumConfig, cusum_detect
from ssa_changepoint.errors import (
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    SsaCpdError,
)
from ssa_changepoint.evaluation import confusion_at_boundaries, roc_from_scores
from ssa_changepoint.experiment import (
    ExperimentPlan,
    OrderStudyPlan,
    run_experiment,
    run_order_study,
)
from ssa_changepoint.io import (
    read_json,
    read_series_csv,
    read_truth,
    write_dataset,
    write_frame,
    write_json,
    write_series_csv,
)
from ssa_changepoint.kohlmorgen_lemm import KohlLemmConfig, kohlmorgen_lemm_detect
from ssa_changepoint.order import bnise, select_order
from ssa_changepoint.pipeline import run_pipeline
from ssa_changepoint.plot import PlotKind, plot_table
from ssa_changepoint.report import ChangePointReport, DetectorKind
from ssa_changepoint.slcd import SlcdConfig, slcd_detect
from ssa_changepoint.ssa import DemixingModel, SsaConfig, extract_sources, fit_demixing
from ssa_changepoint.synth import MixingKind, SynthConfig, generate
from ssa_changepoint.timeseries import epoch_stats, fit_whitening, make_epochs

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from pydantic import BaseModel

    from ssa_changepoint.timeseries import TimeSeries

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


def _float_list(text: str) -> tuple[float, ...]:
    """Parse a comma-separated list of numbers."""
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        msg = f"expected comma-separated numbers, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from exc


def _sigma(text: str) -> float | None:
    """'auto' or a positive kernel width."""
    if text == "auto":
        return None
    return float(text)


def _load_config[M: BaseModel](
    model: type[M], config_path: Path | None, overrides: dict[str, Any]
) -> M:
    """Build a config model from an optional JSON file plus CLI overrides."""
    document: dict[str, Any] = {}
    if config_path is not None:
        document = json.loads(config_path.read_text())
        document.pop("format_version", None)
    document.update({k: v for k, v in overrides.items() if v is not None})
    return parse_model(model, document)


# ---- commands --------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    """Generate a synthetic dataset as CSV plus JSON sidecar."""
    config = _load_config(
        SynthConfig,
        args.config,
        {
            "D": args.D,
            "d_s": args.d_s,
            "d_n": args.d_n,
            "n_epochs": args.n_epochs,
            "epoch_len": args.epoch_len,
            "p": args.p,
            "n_states": args.n_states,
            "p_stay": args.p_stay,
            "mixing": args.mixing,
            "condition_number": args.condition_number,
            "seed": args.seed,
        },
    )
    csv_path, json_path = write_dataset(args.out, generate(config))
    print(f"{csv_path}\n{json_path}")
    return EXIT_OK


def _ssa_config(args: argparse.Namespace, **defaults: Any) -> SsaConfig:  # noqa: ANN401
    overrides = {
        "d_s": getattr(args, "d_s", None),
        "d_n": getattr(args, "d_n", None),
        "n_restarts": args.restarts,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    for key, value in defaults.items():
        if overrides.get(key) is None:
            overrides[key] = value
    return _load_config(SsaConfig, args.config, overrides)


def cmd_fit_ssa(args: argparse.Namespace) -> int:
    """Fit the s- and n-projections and write the model and sources."""
    series = read_series_csv(args.data)
    config = _ssa_config(args)
    model = fit_demixing(
        series, config, n_epochs=args.epochs, include_mean_scatter=args.pooled
    )
    write_json(args.out / "model.json", model.to_dict())
    write_series_csv(args.out / "sources_s.csv", extract_sources(series, model, "s"))
    write_series_csv(args.out / "sources_n.csv", extract_sources(series, model, "n"))
    print(f"objective_s={model.objective_s:.10g} objective_n={model.objective_n:.10g}")
    return EXIT_OK


def cmd_select_order(args: argparse.Namespace) -> int:
    """Test every candidate d_s and report the chosen one."""
    series = read_series_csv(args.data)
    raw = epoch_stats(series, make_epochs(series, args.epochs))
    whitened = fit_whitening(raw).apply_stats(raw)
    selection = select_order(whitened, _ssa_config(args, d_s=1), args.alpha)
    write_frame(args.out / "order.csv", selection.to_frame())
    write_json(args.out / "order.json", selection.to_dict())
    print(f"chosen_d_s={selection.chosen_d_s}")
    return EXIT_OK


def cmd_bnise(args: argparse.Namespace) -> int:
    """Compute BNISE for d = 1..up-to."""
    series = read_series_csv(args.data)
    report = bnise(
        series,
        args.up_to or series.n_channels,
        args.epochs,
        args.permutations,
        args.seed or 0,
        _ssa_config(args, d_s=1),
    )
    write_frame(args.out / "bnise.csv", report.to_frame())
    write_json(args.out / "bnise.json", report.to_dict())
    return EXIT_OK


def _detector_source(args: argparse.Namespace, series: TimeSeries) -> TimeSeries:
    if args.model is not None:
        model = DemixingModel.from_dict(read_json(args.model))
        series = extract_sources(series, model, "n")
    if args.channel is not None:
        series = series.channel(args.channel)
    return series


def cmd_detect(args: argparse.Namespace) -> int:
    """Run one detector and write its report."""
    series = _detector_source(args, read_series_csv(args.data))
    detector = DetectorKind(args.detector)
    shared = {"n_epochs": args.epochs}
    match detector:
        case DetectorKind.SLCD:
            config = _load_config(
                SlcdConfig, args.config, {**shared, "k_clusters": args.k}
            )
            report = slcd_detect(series, config)
        case DetectorKind.CUSUM:
            config = _load_config(
                CusumConfig,
                args.config,
                {**shared, "window": args.window, "threshold": args.threshold},
            )
            report = cusum_detect(series, config)
        case DetectorKind.KL:
            config = _load_config(
                KohlLemmConfig,
                args.config,
                {
                    **shared,
                    "window": args.window,
                    "sigma": args.sigma,
                    "cost": args.cost,
                    "mode": args.mode,
                    "n_changepoints": args.n_changepoints,
                },
            )
            report = kohlmorgen_lemm_detect(series, config)
            print(f"sigma={report.metadata['sigma']:.10g}", file=sys.stderr)
    path = args.out / f"report_{detector.value}.json"
    write_json(path, report.to_dict())
    write_frame(path.with_suffix(".csv"), report.to_frame())
    print(f"{report.n_boundaries} boundaries, {len(report.changepoints)} flagged")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score a report against a ground-truth sidecar."""
    report = ChangePointReport.from_dict(read_json(args.report))
    truth = read_truth(args.truth, report.n_boundaries)
    counts = confusion_at_boundaries(report, truth, args.tolerance)
    curve = roc_from_scores(report.scores, truth)
    write_frame(args.out / "roc.csv", curve.to_frame())
    payload = {"confusion": counts._asdict(), **curve.to_dict()}
    write_json(args.out / "evaluation.json", payload)
    print(
        f"auc={curve.auc:.6f} tp={counts.tp} fp={counts.fp} "
        f"fn={counts.fn} tn={counts.tn}"
    )
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run a Monte-Carlo experiment or an order-selection study."""
    if args.study == "order":
        plan = _load_config(
            OrderStudyPlan,
            args.config,
            {"seed": args.seed, "jobs": args.jobs, "n_realizations": args.realizations},
        )
        study = run_order_study(plan)
        write_frame(args.out / "order_study.csv", study.mean_p_values())
        write_frame(args.out / "order_study_choices.csv", study.chosen)
        print(json.dumps(study.modal_choice()))
        return EXIT_OK
    plan = _load_config(
        ExperimentPlan,
        args.config,
        {
            "scheme": args.scheme,
            "grid": args.grid,
            "detector": args.detector,
            "n_realizations": args.realizations,
            "D": args.D,
            "d_n": args.d_n,
            "p": args.p,
            "n_epochs": args.n_epochs,
            "epoch_len": args.epoch_len,
            "seed": args.seed,
            "jobs": args.jobs,
        },
    )
    result = run_experiment(plan)
    write_frame(args.out / "experiment.csv", result.summary())
    write_frame(args.out / "experiment_samples.csv", result.samples)
    write_json(args.out / "experiment.json", result.to_dict())
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    """Render a result CSV as SVG."""
    frame = pd.read_csv(args.table)
    output = args.output or args.out / args.table.with_suffix(".svg").name
    kind = PlotKind(args.kind) if args.kind else None
    print(plot_table(frame, output, kind))
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    """Run the cached end-to-end pipeline."""
    if args.config is None:
        msg = "pipeline needs --config"
        raise ConfigError(msg)
    overrides = {"seed": args.seed, "jobs": args.jobs}
    if args.out_given:
        overrides["out"] = str(args.out)
    config = PipelineConfig.from_file(args.config, **overrides)
    outcome = run_pipeline(config)
    print(f"computed: {', '.join(outcome.computed) or '-'}")
    print(f"cached: {', '.join(outcome.cached) or '-'}")
    return EXIT_OK


# ---- parser ----------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--jobs", type=int, default=None, help="Worker threads")
    common.add_argument("--log-level", default=None, help="Logging level")
    return common


def _add_ssa_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=30, help="Number of epochs")
    parser.add_argument("--restarts", type=int, default=None, help="Optimizer restarts")
    parser.add_argument(
        "--max-iters", type=int, default=None, help="Iterations per restart"
    )


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="ssa-cpd",
        description="Stationary Subspace Analysis for change point detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    gen = sub.add_parser("generate", parents=[common], help="Generate synthetic data")
    gen.add_argument("--D", type=int, default=None)
    gen.add_argument("--d-s", type=int, default=None)
    gen.add_argument("--d-n", type=int, default=None)
    gen.add_argument("--n-epochs", type=int, default=None)
    gen.add_argument("--epoch-len", type=int, default=None)
    gen.add_argument("--p", type=float, default=None)
    gen.add_argument("--n-states", type=int, default=None)
    gen.add_argument("--p-stay", type=float, default=None)
    gen.add_argument("--mixing", choices=[m.value for m in MixingKind], default=None)
    gen.add_argument("--condition-number", type=float, default=None)
    gen.set_defaults(handler=cmd_generate)

    fit = sub.add_parser("fit-ssa", parents=[common], help="Fit SSA projections")
    fit.add_argument("data", type=Path)
    fit.add_argument("--d-s", type=int, default=None)
    fit.add_argument("--d-n", type=int, default=None)
    fit.add_argument("--pooled", action="store_true", help="Pooled whitening")
    _add_ssa_flags(fit)
    fit.set_defaults(handler=cmd_fit_ssa)

    order = sub.add_parser("select-order", parents=[common], help="Choose d_s")
    order.add_argument("data", type=Path)
    order.add_argument("--alpha", type=float, default=0.01)
    _add_ssa_flags(order)
    order.set_defaults(handler=cmd_select_order)

    bn = sub.add_parser("bnise", parents=[common], help="Hold-out BNISE per d")
    bn.add_argument("data", type=Path)
    bn.add_argument("--up-to", type=int, default=None)
    bn.add_argument("--permutations", type=int, default=20)
    _add_ssa_flags(bn)
    bn.set_defaults(handler=cmd_bnise)

    det = sub.add_parser("detect", parents=[common], help="Run a detector")
    det.add_argument("data", type=Path)
    detectors = [d.value for d in DetectorKind]
    det.add_argument("--detector", choices=detectors, required=True)
    det.add_argument("--epochs", type=int, default=None)
    det.add_argument("--k", type=int, default=None, help="SLCD cluster count")
    det.add_argument("--window", type=int, default=None)
    det.add_argument("--threshold", type=float, default=None, help="CUSUM h")
    det.add_argument("--sigma", type=_sigma, default=None, help="'auto' or a width")
    det.add_argument("--cost", type=float, default=None, help="KL transition cost C")
    det.add_argument("--mode", choices=["free", "fixed"], default=None)
    det.add_argument("--n-changepoints", type=int, default=None)
    det.add_argument("--channel", type=int, default=None)
    det.add_argument("--model", type=Path, default=None, help="Detect on n-sources")
    det.set_defaults(handler=cmd_detect)

    ev = sub.add_parser("evaluate", parents=[common], help="Score a report")
    ev.add_argument("report", type=Path)
    ev.add_argument("--truth", type=Path, required=True)
    ev.add_argument("--tolerance", type=int, default=0)
    ev.set_defaults(handler=cmd_evaluate)

    exp = sub.add_parser("experiment", parents=[common], help="Run an experiment")
    exp.add_argument("--study", choices=["detection", "order"], default="detection")
    exp.add_argument("--scheme", default=None)
    exp.add_argument("--grid", type=_float_list, default=None)
    exp.add_argument("--detector", choices=detectors, default=None)
    exp.add_argument("--realizations", type=int, default=None)
    exp.add_argument("--D", type=int, default=None)
    exp.add_argument("--d-n", type=int, default=None)
    exp.add_argument("--p", type=float, default=None)
    exp.add_argument("--n-epochs", type=int, default=None)
    exp.add_argument("--epoch-len", type=int, default=None)
    exp.set_defaults(handler=cmd_experiment)

    pl = sub.add_parser("plot", parents=[common], help="Plot a result table")
    pl.add_argument("table", type=Path)
    pl.add_argument("--kind", choices=[k.value for k in PlotKind], default=None)
    pl.add_argument("--output", type=Path, default=None)
    pl.set_defaults(handler=cmd_plot)

    pipe = sub.add_parser("pipeline", parents=[common], help="Run the full pipeline")
    pipe.set_defaults(handler=cmd_pipeline)
    return parser


def _configure_logging(level_name: str) -> None:
    level = logging.getLevelNamesMapping().get(level_name.upper())
    if level is None:
        msg = f"unknown log level {level_name!r}"
        raise ConfigError(msg)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        _configure_logging(args.log_level or env_log_level())
        args.out_given = args.out is not None
        args.out = args.out or Path()
        args.jobs = args.jobs or env_jobs()
        return handler(args)
    except SsaCpdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except pydantic.ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
