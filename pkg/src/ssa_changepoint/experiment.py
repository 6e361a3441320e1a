"""Monte-Carlo experiments: detectors on raw, projected and SSA inputs."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ssa_changepoint.cusum import CusumConfig, cusum_roc
from ssa_changepoint.errors import ExperimentError, SsaCpdError
from ssa_changepoint.evaluation import roc_from_scores
from ssa_changepoint.kohlmorgen_lemm import KohlLemmConfig, kohlmorgen_lemm_detect
from ssa_changepoint.order import select_order
from ssa_changepoint.report import DetectorKind
from ssa_changepoint.seeding import derive_seed, make_rng
from ssa_changepoint.slcd import SlcdConfig, slcd_detect
from ssa_changepoint.ssa import SsaConfig, fit_n_projection
from ssa_changepoint.synth import MixingKind, SynthConfig, generate, random_projection
from ssa_changepoint.timeseries import epoch_stats, fit_whitening

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

    from numpy.typing import NDArray

    from ssa_changepoint.synth import SynthDataset
    from ssa_changepoint.timeseries import Epoching, TimeSeries

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["grid_value", "condition", "q25", "median", "q75", "n"]


class Scheme(StrEnum):
    """Which parameter the experiment grid varies."""

    VARY_DN_FIXED_D = "vary_dn_fixed_D"
    VARY_DS_FIXED_DN = "vary_ds_fixed_dn"
    VARY_P_FIXED_DIMS = "vary_p_fixed_dims"


class Condition(StrEnum):
    """Input a detector is run on."""

    BASELINE = "baseline"
    RANDOM_PROJECTION = "random_projection"
    SSA = "ssa"


class ExperimentPlan(BaseModel):
    """Grid, data shape and detector settings of one experiment."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scheme: Scheme
    grid: tuple[float, ...] = Field(min_length=1)
    detector: DetectorKind = DetectorKind.SLCD
    conditions: tuple[Condition, ...] = (
        Condition.BASELINE,
        Condition.RANDOM_PROJECTION,
        Condition.SSA,
    )
    n_realizations: int = Field(default=20, ge=1)
    D: int | None = Field(default=None, ge=2)
    d_n: int | None = Field(default=None, ge=1)
    p: float = Field(default=2.0, gt=1.0)
    n_epochs: int = Field(default=100, ge=2)
    epoch_len: int = Field(default=200, ge=2)
    n_states: int = Field(default=5, ge=2)
    p_stay: float = Field(default=0.9, ge=0.0, le=1.0)
    mixing: MixingKind = MixingKind.RANDOM_ORTHOGONAL
    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)
    max_failure_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    ssa: SsaConfig = SsaConfig(d_n=1, n_restarts=3, max_iters=300)
    slcd: SlcdConfig = SlcdConfig()
    cusum: CusumConfig = CusumConfig()
    kl: KohlLemmConfig = KohlLemmConfig()

    @model_validator(mode="after")
    def _scheme_parameters(self) -> ExperimentPlan:
        needs = {
            Scheme.VARY_DN_FIXED_D: ("D",),
            Scheme.VARY_DS_FIXED_DN: ("d_n",),
            Scheme.VARY_P_FIXED_DIMS: ("D", "d_n"),
        }[self.scheme]
        missing = [name for name in needs if getattr(self, name) is None]
        if missing:
            msg = f"scheme {self.scheme.value} needs {', '.join(missing)}"
            raise ValueError(msg)
        for value in self.grid:
            self.dimensions(value)
        return self

    def dimensions(self, value: float) -> tuple[int, int, float]:
        """(d_s, d_n, p) of the datasets at one grid value."""
        match self.scheme:
            case Scheme.VARY_DN_FIXED_D:
                d_n, p = int(value), self.p
                d_s = (self.D or 0) - d_n
            case Scheme.VARY_DS_FIXED_DN:
                d_s, d_n, p = int(value), self.d_n or 0, self.p
            case Scheme.VARY_P_FIXED_DIMS:
                d_n, p = self.d_n or 0, float(value)
                d_s = (self.D or 0) - d_n
        if d_s < 1 or d_n < 1 or p <= 1:
            msg = f"grid value {value} gives d_s={d_s}, d_n={d_n}, p={p}"
            raise ValueError(msg)
        return d_s, d_n, p

    def synth_config(self, value: float, realization: int) -> SynthConfig:
        """Dataset configuration of one realization at one grid value."""
        d_s, d_n, p = self.dimensions(value)
        return SynthConfig(
            D=d_s + d_n,
            d_s=d_s,
            d_n=d_n,
            n_epochs=self.n_epochs,
            epoch_len=self.epoch_len,
            p=p,
            n_states=self.n_states,
            p_stay=self.p_stay,
            mixing=self.mixing,
            seed=derive_seed(self.seed, f"synth:{value:g}", realization),
        )


@dataclass(frozen=True)
class ExperimentResult:
    """AUC of every realization and condition, with percentile summaries."""

    plan: ExperimentPlan
    samples: pd.DataFrame  # grid_value, realization, condition, auc
    failures: dict[float, int] = field(default_factory=dict)

    def summary(self) -> pd.DataFrame:
        """Median and 25th/75th percentiles per grid value and condition."""
        rows = []
        for (value, condition), group in self.samples.groupby(
            ["grid_value", "condition"], sort=False
        ):
            aucs = group["auc"].to_numpy(dtype=np.float64)
            q25, median, q75 = np.percentile(aucs, [25, 50, 75])
            rows.append(
                {
                    "grid_value": value,
                    "condition": condition,
                    "q25": float(q25),
                    "median": float(median),
                    "q75": float(q75),
                    "n": int(aucs.size),
                }
            )
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def median(self, value: float, condition: Condition) -> float:
        """Median AUC at one grid point and condition."""
        mask = (self.samples["grid_value"] == value) & (
            self.samples["condition"] == condition.value
        )
        return float(self.samples.loc[mask, "auc"].median())

    def to_dict(self) -> dict[str, Any]:
        """Serialize the plan, samples and failure counts."""
        return {
            "plan": self.plan.model_dump(mode="json"),
            "samples": self.samples.to_dict(orient="records"),
            "failures": {f"{k:g}": v for k, v in self.failures.items()},
        }


def ssa_sources(
    series: TimeSeries, epochs: Epoching, d_n: int, config: SsaConfig
) -> TimeSeries:
    """Whiten on the given epoching and extract d_n estimated n-sources."""
    raw = epoch_stats(series, epochs)
    whitening = fit_whitening(raw)
    fit = fit_n_projection(
        whitening.apply_stats(raw), config.model_copy(update={"d_n": d_n, "d_s": None})
    )
    return whitening.apply(series).project(fit.projection)


def _detector_auc(
    series: TimeSeries, plan: ExperimentPlan, epochs: Epoching, truth: NDArray[np.bool_]
) -> float:
    match plan.detector:
        case DetectorKind.SLCD:
            report = slcd_detect(series, plan.slcd, epochs)
            return roc_from_scores(report.scores, truth).auc
        case DetectorKind.KL:
            report = kohlmorgen_lemm_detect(series, plan.kl, epochs)
            return roc_from_scores(report.scores, truth).auc
        case DetectorKind.CUSUM:
            return cusum_roc(series, plan.cusum, truth, epochs).auc


def _condition_input(
    condition: Condition,
    dataset: SynthDataset,
    plan: ExperimentPlan,
    value: float,
    realization: int,
) -> TimeSeries | list[TimeSeries]:
    series = dataset.series
    univariate = plan.detector is DetectorKind.CUSUM
    dim = 1 if univariate else dataset.config.d_n
    match condition:
        case Condition.BASELINE:
            if univariate:
                return [series.channel(i) for i in range(series.n_channels)]
            return series
        case Condition.RANDOM_PROJECTION:
            rng = make_rng(plan.seed, f"projection:{value:g}", realization)
            return series.project(random_projection(series.n_channels, dim, rng))
        case Condition.SSA:
            ssa_config = plan.ssa.model_copy(
                update={"seed": derive_seed(plan.seed, "ssa", realization) % 2**32}
            )
            return ssa_sources(series, dataset.epochs, dim, ssa_config)


def run_realization(
    plan: ExperimentPlan, value: float, realization: int
) -> dict[Condition, float]:
    """AUC per condition for one generated dataset.

    For CUSUM the baseline is the best single raw channel.
    """
    dataset = generate(plan.synth_config(value, realization))
    truth = dataset.truth
    epochs = dataset.epochs
    aucs = {}
    for condition in plan.conditions:
        inputs = _condition_input(condition, dataset, plan, value, realization)
        if isinstance(inputs, list):
            aucs[condition] = max(_detector_auc(s, plan, epochs, truth) for s in inputs)
        else:
            aucs[condition] = _detector_auc(inputs, plan, epochs, truth)
    return aucs


def _parallel_map[T, R](
    func: Callable[[T], R], items: Iterable[T], jobs: int
) -> list[R]:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def run_experiment(plan: ExperimentPlan) -> ExperimentResult:
    """Run every realization at every grid value and collect AUCs.

    A realization that raises is excluded and counted as a failure.

    Raises:
        ExperimentError: If more than ``plan.max_failure_rate`` of the
            realizations failed.
    """
    tasks = [(value, r) for value in plan.grid for r in range(plan.n_realizations)]

    def attempt(task: tuple[float, int]) -> dict[Condition, float] | None:
        value, realization = task
        try:
            return run_realization(plan, value, realization)
        except SsaCpdError as exc:
            logger.warning("Realization %d at %g failed: %s", realization, value, exc)
            return None

    outcomes = _parallel_map(attempt, tasks, plan.jobs)
    rows = []
    failures: Counter[float] = Counter()
    for (value, realization), aucs in zip(tasks, outcomes, strict=True):
        if aucs is None:
            failures[value] += 1
            continue
        rows.extend(
            {
                "grid_value": value,
                "realization": realization,
                "condition": condition.value,
                "auc": auc,
            }
            for condition, auc in aucs.items()
        )
    n_failed = sum(failures.values())
    if n_failed > plan.max_failure_rate * len(tasks):
        msg = f"{n_failed} of {len(tasks)} realizations failed"
        raise ExperimentError(msg)
    logger.info("Experiment finished: %d realizations, %d failed", len(tasks), n_failed)
    samples = pd.DataFrame(
        rows, columns=["grid_value", "realization", "condition", "auc"]
    )
    return ExperimentResult(plan=plan, samples=samples, failures=dict(failures))


class OrderStudyPlan(BaseModel):
    """Repeated order selection over datasets with known d_s."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    D: int = Field(default=10, ge=2)
    true_d_s: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9)
    n_realizations: int = Field(default=20, ge=1)
    p: float = Field(default=3.0, gt=1.0)
    n_epochs: int = Field(default=30, ge=2)
    epoch_len: int = Field(default=500, ge=2)
    alpha: float = Field(default=0.01, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)
    ssa: SsaConfig = SsaConfig(d_s=1, n_restarts=3, max_iters=300)

    @model_validator(mode="after")
    def _proper_subspaces(self) -> OrderStudyPlan:
        bad = [d for d in self.true_d_s if not 1 <= d < self.D]
        if bad:
            msg = f"true_d_s values {bad} are outside 1..{self.D - 1}"
            raise ValueError(msg)
        return self


@dataclass(frozen=True)
class OrderStudyResult:
    """Average p-value per (true d_s, candidate) and the modal choice."""

    plan: OrderStudyPlan
    p_values: pd.DataFrame  # true_d_s, realization, candidate, p_value
    chosen: pd.DataFrame  # true_d_s, realization, chosen_d_s

    def mean_p_values(self) -> pd.DataFrame:
        """Table with columns true_d_s, candidate, mean_p_value."""
        return (
            self.p_values.groupby(["true_d_s", "candidate"], sort=True)["p_value"]
            .mean()
            .rename("mean_p_value")
            .reset_index()
        )

    def modal_choice(self) -> dict[int, int]:
        """Most frequent chosen d_s per true d_s (smallest on ties)."""
        modes = {}
        for true_d_s, group in self.chosen.groupby("true_d_s", sort=True):
            counts = Counter(group["chosen_d_s"].tolist())
            top = max(counts.values())
            modes[int(true_d_s)] = min(d for d, c in counts.items() if c == top)
        return modes


def run_order_study(plan: OrderStudyPlan) -> OrderStudyResult:
    """Repeat :func:`select_order` on fresh datasets for every true d_s."""
    tasks = [(d_s, r) for d_s in plan.true_d_s for r in range(plan.n_realizations)]

    def one(task: tuple[int, int]) -> tuple[list[dict[str, Any]], dict[str, Any]]:
        d_s, realization = task
        dataset = generate(
            SynthConfig(
                D=plan.D,
                d_s=d_s,
                d_n=plan.D - d_s,
                n_epochs=plan.n_epochs,
                epoch_len=plan.epoch_len,
                p=plan.p,
                seed=derive_seed(plan.seed, f"order:{d_s}", realization),
            )
        )
        raw = epoch_stats(dataset.series, dataset.epochs)
        whitened = fit_whitening(raw).apply_stats(raw)
        selection = select_order(whitened, plan.ssa, plan.alpha)
        p_rows = [
            {
                "true_d_s": d_s,
                "realization": realization,
                "candidate": c.d_s,
                "p_value": c.test.p_value if c.test else 0.0,
            }
            for c in selection.candidates
        ]
        chosen = {
            "true_d_s": d_s,
            "realization": realization,
            "chosen_d_s": selection.chosen_d_s,
        }
        return p_rows, chosen

    outcomes = _parallel_map(one, tasks, plan.jobs)
    p_values = pd.DataFrame(
        [row for rows, _ in outcomes for row in rows],
        columns=["true_d_s", "realization", "candidate", "p_value"],
    )
    chosen = pd.DataFrame(
        [c for _, c in outcomes], columns=["true_d_s", "realization", "chosen_d_s"]
    )
    logger.info("Order study finished: %d datasets", len(tasks))
    return OrderStudyResult(plan=plan, p_values=p_values, chosen=chosen)
