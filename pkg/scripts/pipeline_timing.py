"""Profile one synthetic change-point run, showing time spent in each stage.

Usage: uv run python scripts/pipeline_timing.py [--D 10] [--d-n 2] [--seed 0]
"""

from __future__ import annotations

import argparse
import time
from typing import TYPE_CHECKING, ParamSpec, TypeVar

from dotenv import load_dotenv

from ssa_changepoint.evaluation import report_auc
from ssa_changepoint.slcd import SlcdConfig, slcd_detect
from ssa_changepoint.ssa import (
    SsaConfig,
    fit_n_projection,
    fit_s_projection,
)
from ssa_changepoint.synth import SynthConfig, generate
from ssa_changepoint.timeseries import epoch_stats, fit_whitening

if TYPE_CHECKING:
    from collections.abc import Callable

    from ssa_changepoint.report import ChangePointReport
    from ssa_changepoint.ssa import ProjectionFit
    from ssa_changepoint.synth import SynthDataset
    from ssa_changepoint.timeseries import EpochStats, TimeSeries

load_dotenv()

parser = argparse.ArgumentParser(description="Time SSA change-point stages")
parser.add_argument("--D", type=int, default=10, help="Number of channels")
parser.add_argument("--d-n", type=int, default=2, help="Non-stationary sources")
parser.add_argument("--n-epochs", type=int, default=100, help="Number of epochs")
parser.add_argument("--epoch-len", type=int, default=500, help="Samples per epoch")
parser.add_argument("--seed", type=int, default=0, help="Generator seed")
parser.add_argument("--jobs", type=int, default=1, help="Optimizer restart workers")
args = parser.parse_args()


P = ParamSpec("P")
T = TypeVar("T")


def timed(
    name: str,
) -> Callable[[Callable[P, T]], Callable[P, tuple[T, float]]]:
    """Decorator to time a function and return (result, elapsed_seconds)."""

    def decorator(func: Callable[P, T]) -> Callable[P, tuple[T, float]]:
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> tuple[T, float]:
            print(f"\n⏱️  Starting: {name}")
            start = time.perf_counter()
            result = func(*args, **kwargs)
            elapsed = time.perf_counter() - start
            print(f"✅ Completed: {name} in {elapsed:.2f}s")
            return result, elapsed

        return wrapper

    return decorator


@timed("1. Generate synthetic dataset")
def step_generate(config: SynthConfig) -> SynthDataset:
    """Draw the mixed series and its ground truth."""
    return generate(config)


@timed("2. Epoch statistics and whitening")
def step_whiten(dataset: SynthDataset) -> EpochStats:
    """Estimate per-epoch moments and whiten them."""
    raw = epoch_stats(dataset.series, dataset.epochs)
    return fit_whitening(raw).apply_stats(raw)


@timed("3. Fit s-projection")
def step_fit_s(stats: EpochStats, config: SsaConfig) -> ProjectionFit:
    """Minimize the SSA objective for the stationary subspace."""
    return fit_s_projection(stats, config)


@timed("4. Fit n-projection")
def step_fit_n(stats: EpochStats, config: SsaConfig) -> ProjectionFit:
    """Maximize the SSA objective for the non-stationary subspace."""
    return fit_n_projection(stats, config)


@timed("5. SLCD on raw data")
def step_detect(series: TimeSeries, dataset: SynthDataset) -> ChangePointReport:
    """Segment the series with single-linkage clustering."""
    return slcd_detect(series, SlcdConfig(), dataset.epochs)


def main() -> None:
    """Run generation, SSA and detection with timing for each step."""
    synth = SynthConfig(
        D=args.D,
        d_s=args.D - args.d_n,
        d_n=args.d_n,
        n_epochs=args.n_epochs,
        epoch_len=args.epoch_len,
        seed=args.seed,
    )
    ssa = SsaConfig(d_n=args.d_n, seed=args.seed, jobs=args.jobs)

    total_start = time.perf_counter()
    timings = {}

    dataset, timings["generate"] = step_generate(synth)
    print(f"   Change points: {len(dataset.true_changepoints)}")

    stats, timings["whiten"] = step_whiten(dataset)

    fit_s, timings["fit_s"] = step_fit_s(stats, ssa)
    print(f"   Objective: {fit_s.objective:.6g}")

    fit_n, timings["fit_n"] = step_fit_n(stats, ssa)
    print(f"   Objective: {fit_n.objective:.6g}")

    raw_report, timings["slcd_raw"] = step_detect(dataset.series, dataset)
    print(f"   AUC: {report_auc(raw_report, dataset.truth):.3f}")

    whitening = fit_whitening(epoch_stats(dataset.series, dataset.epochs))
    sources = whitening.apply(dataset.series).project(fit_n.projection)
    ssa_report, timings["slcd_ssa"] = step_detect(sources, dataset)
    print(f"   AUC: {report_auc(ssa_report, dataset.truth):.3f}")

    total_elapsed = time.perf_counter() - total_start

    print("\n" + "=" * 50)
    print("📊 TIMING SUMMARY")
    print("=" * 50)
    for step, elapsed in timings.items():
        pct = (elapsed / total_elapsed) * 100
        bar = "█" * int(pct / 2)
        print(f"{step:12} {elapsed:6.2f}s ({pct:4.1f}%) {bar}")
    print("-" * 50)
    print(f"{'TOTAL':12} {total_elapsed:6.2f}s")
    kept = f"{sources.n_channels} of {dataset.series.n_channels}"
    print(f"\n✅ SSA sources: {kept} channels")


if __name__ == "__main__":
    main()
