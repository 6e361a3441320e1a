"""End-to-end pipeline with per-stage cached artifacts.

Stages run in the order of ``theme.PIPELINE_STAGES``. A stage whose outputs
all exist, written under the same config fingerprint, is skipped and its
outputs are read back by the stages after it. The manifest holding the
fingerprint is written only once every stage has succeeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from ssa_changepoint.cusum import cusum_detect, cusum_roc
from ssa_changepoint.errors import ConfigError, SsaCpdError, StageError
from ssa_changepoint.evaluation import roc_from_scores
from ssa_changepoint.experiment import (
    Condition,
    run_experiment,
    run_order_study,
    ssa_sources,
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
from ssa_changepoint.kohlmorgen_lemm import kohlmorgen_lemm_detect
from ssa_changepoint.order import bnise, select_order
from ssa_changepoint.report import ChangePointReport, DetectorKind
from ssa_changepoint.seeding import derive_seed, make_rng
from ssa_changepoint.slcd import slcd_detect
from ssa_changepoint.ssa import DemixingModel, extract_sources, fit_demixing
from ssa_changepoint.synth import generate, random_projection
from ssa_changepoint.theme import stage_line
from ssa_changepoint.timeseries import Epoching, epoch_stats, fit_whitening, make_epochs

if TYPE_CHECKING:
    from collections.abc import Callable
    from pathlib import Path

    from numpy.typing import NDArray

    from ssa_changepoint.config import PipelineConfig
    from ssa_changepoint.timeseries import EpochStats, TimeSeries

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class PipelineOutcome:
    """Which stages ran, which were reused, and what they wrote."""

    computed: list[str] = field(default_factory=list)
    cached: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    outputs: dict[str, list[Path]] = field(default_factory=dict)


class Pipeline:
    """Runs every configured stage of one pipeline config."""

    def __init__(self, config: PipelineConfig) -> None:
        """Prepare a run writing below ``config.out``."""
        self.config = config
        self.out = config.out
        self.outcome = PipelineOutcome()
        self._reuse = False

    # ---- paths -------------------------------------------------------------

    @property
    def series_path(self) -> Path:
        """The dataset CSV."""
        return self.out / "series.csv"

    @property
    def truth_path(self) -> Path:
        """The ground-truth sidecar."""
        return self.out / "series.json"

    def model_path(self, d_s: int) -> Path:
        """Fitted demixing model for one candidate d_s."""
        return self.out / "models" / f"model_d{d_s}.json"

    def report_path(
        self, detector: DetectorKind, condition: Condition, d_s: int | None
    ) -> Path:
        """Report JSON of one detector on one input."""
        suffix = "" if d_s is None else f"_d{d_s}"
        return self.out / "reports" / f"{detector.value}_{condition.value}{suffix}.json"

    # ---- orchestration -----------------------------------------------------

    def run(self) -> PipelineOutcome:
        """Run (or reuse) every stage.

        Raises:
            StageError: Naming the first stage that failed.
        """
        self._check_manifest()
        self._stage("dataset", [self.series_path, self.truth_path], self._dataset)
        if self.config.order is not None:
            outputs = [self.out / "order.csv", self.out / "order.json"]
            self._stage("order", outputs, self._order)
        else:
            self.outcome.skipped.append("order")
        if self.config.bnise is not None:
            outputs = [self.out / "bnise.csv", self.out / "bnise.json"]
            self._stage("bnise", outputs, self._bnise)
        else:
            self.outcome.skipped.append("bnise")
        dims = self._stage_value("fit", self._candidate_dims)
        self._stage("fit", [self.model_path(d) for d in dims], lambda: self._fit(dims))
        self._stage("detect", self._report_paths(dims), lambda: self._detect(dims))
        self._stage("evaluate", [self.out / "auc.csv"], lambda: self._evaluate(dims))
        if self.config.experiment is not None or self.config.order_study is not None:
            self._stage("experiment", self._experiment_paths(), self._experiment)
        else:
            self.outcome.skipped.append("experiment")
        self._write_manifest()
        return self.outcome

    def _check_manifest(self) -> None:
        path = self.out / MANIFEST
        if not path.exists():
            return
        self._reuse = read_json(path).get("fingerprint") == self.config.fingerprint()
        if not self._reuse:
            # outputs on disk now belong to no known config
            logger.warning("Config changed since the last run; recomputing")
            path.unlink()

    def _write_manifest(self) -> None:
        write_json(
            self.out / MANIFEST,
            {
                "fingerprint": self.config.fingerprint(),
                "config": self.config.model_dump(mode="json"),
            },
        )

    def _stage(
        self, stage: str, outputs: list[Path], compute: Callable[[], None]
    ) -> None:
        self.outcome.outputs[stage] = outputs
        if self._reuse and outputs and all(p.exists() for p in outputs):
            logger.info(stage_line(stage, cached=True))
            self.outcome.cached.append(stage)
            return
        logger.info(stage_line(stage))
        try:
            compute()
        except (SsaCpdError, OSError) as exc:
            logger.error(stage_line(stage, error=str(exc)))  # noqa: TRY400
            raise StageError(stage, exc) from exc
        logger.info(stage_line(stage, done=True))
        self.outcome.computed.append(stage)

    def _stage_value[R](self, stage: str, compute: Callable[[], R]) -> R:
        try:
            return compute()
        except (SsaCpdError, OSError) as exc:
            raise StageError(stage, exc) from exc

    # ---- shared inputs -----------------------------------------------------

    def _series(self) -> TimeSeries:
        return read_series_csv(self.series_path)

    def _epochs(self, series: TimeSeries) -> Epoching:
        synth = self.config.synth
        if synth is not None:
            length = synth.epoch_len
            return Epoching(edges=tuple(range(0, length * synth.n_epochs + 1, length)))
        return make_epochs(series, self.config.n_epochs)

    def _truth(self, n_boundaries: int) -> NDArray[np.bool_] | None:
        if self.config.synth is None and self.config.truth is None:
            return None
        return read_truth(self.truth_path, n_boundaries)

    def _candidate_dims(self) -> list[int]:
        if self.config.d_s:
            return sorted(set(self.config.d_s))
        if self.config.order is not None:
            chosen = int(read_json(self.out / "order.json")["chosen_d_s"])
            if chosen > 0:
                return [chosen]
            logger.warning("Order selection rejected every candidate")
        synth = self.config.synth
        if synth is not None and 0 < synth.d_s < synth.D:
            return [synth.d_s]
        msg = "no candidate d_s: set 'd_s', enable 'order', or use synthetic data"
        raise ConfigError(msg)

    # ---- stages ------------------------------------------------------------

    def _dataset(self) -> None:
        if self.config.synth is not None:
            write_dataset(self.out, generate(self.config.synth))
            return
        if self.config.data is None:
            return
        series = read_series_csv(self.config.data)
        write_series_csv(self.series_path, series)
        epochs = make_epochs(series, self.config.n_epochs)
        changepoints: list[int] = []
        if self.config.truth is not None:
            truth = read_truth(self.config.truth, epochs.n_epochs - 1)
            changepoints = np.flatnonzero(truth).tolist()
        write_json(
            self.truth_path,
            {"source": str(self.config.data), "true_changepoints": changepoints},
        )

    def _whitened_stats(self, series: TimeSeries) -> EpochStats:
        raw = epoch_stats(series, self._epochs(series))
        return fit_whitening(raw).apply_stats(raw)

    def _order(self) -> None:
        order = self.config.order
        if order is None:
            return
        ssa = self.config.ssa.model_copy(update={"jobs": self.config.jobs})
        stats = self._whitened_stats(self._series())
        selection = select_order(stats, ssa, order.alpha)
        write_frame(self.out / "order.csv", selection.to_frame())
        write_json(self.out / "order.json", selection.to_dict())

    def _bnise(self) -> None:
        stage = self.config.bnise
        if stage is None:
            return
        series = self._series()
        report = bnise(
            series,
            stage.up_to_d or series.n_channels,
            self._epochs(series).n_epochs,
            stage.n_permutations,
            derive_seed(self.config.seed, "bnise"),
            self.config.ssa,
        )
        write_frame(self.out / "bnise.csv", report.to_frame())
        write_json(self.out / "bnise.json", report.to_dict())

    def _fit(self, dims: list[int]) -> None:
        series = self._series()
        epochs = self._epochs(series)
        for d_s in dims:
            ssa = self.config.ssa.model_copy(
                update={
                    "d_s": d_s,
                    "d_n": None,
                    "seed": derive_seed(self.config.seed, "ssa", d_s) % 2**32,
                    "jobs": self.config.jobs,
                }
            )
            model = fit_demixing(series, ssa, epochs=epochs)
            write_json(self.model_path(d_s), model.to_dict())

    def _inputs(self, dims: list[int]) -> list[tuple[Condition, int | None]]:
        pairs: list[tuple[Condition, int | None]] = []
        for condition in self.config.conditions:
            if condition is Condition.BASELINE:
                pairs.append((condition, None))
            else:
                pairs.extend((condition, d) for d in dims)
        return pairs

    def _report_paths(self, dims: list[int]) -> list[Path]:
        return [
            self.report_path(detector, condition, d_s)
            for detector in self.config.detectors
            for condition, d_s in self._inputs(dims)
        ]

    def _condition_series(
        self,
        series: TimeSeries,
        epochs: Epoching,
        detector: DetectorKind,
        condition: Condition,
        d_s: int | None,
    ) -> TimeSeries:
        univariate = detector is DetectorKind.CUSUM
        if condition is Condition.BASELINE:
            return series.channel(self.config.cusum_channel) if univariate else series
        d_s = d_s or 0
        dim = 1 if univariate else series.n_channels - d_s
        if condition is Condition.RANDOM_PROJECTION:
            rng = make_rng(self.config.seed, "projection", d_s)
            return series.project(random_projection(series.n_channels, dim, rng))
        if univariate:
            ssa = self.config.ssa.model_copy(
                update={"seed": derive_seed(self.config.seed, "ssa", d_s) % 2**32}
            )
            return ssa_sources(series, epochs, 1, ssa)
        model = DemixingModel.from_dict(read_json(self.model_path(d_s)))
        return extract_sources(series, model, which="n")

    def _detect(self, dims: list[int]) -> None:
        series = self._series()
        epochs = self._epochs(series)
        truth = self._truth(epochs.n_epochs - 1)
        for detector in self.config.detectors:
            for condition, d_s in self._inputs(dims):
                source = self._condition_series(
                    series, epochs, detector, condition, d_s
                )
                report = self._run_detector(detector, source, epochs, truth)
                path = self.report_path(detector, condition, d_s)
                write_json(path, report.to_dict())
                write_frame(path.with_suffix(".csv"), report.to_frame())

    def _run_detector(
        self,
        detector: DetectorKind,
        source: TimeSeries,
        epochs: Epoching,
        truth: NDArray[np.bool_] | None,
    ) -> ChangePointReport:
        match detector:
            case DetectorKind.SLCD:
                return slcd_detect(source, self.config.slcd, epochs)
            case DetectorKind.KL:
                return kohlmorgen_lemm_detect(source, self.config.kl, epochs)
            case DetectorKind.CUSUM:
                report = cusum_detect(source, self.config.cusum, epochs)
                if truth is not None and truth.any() and not truth.all():
                    auc = cusum_roc(source, self.config.cusum, truth, epochs).auc
                    report.metadata["sweep_auc"] = auc
                return report

    def _evaluate(self, dims: list[int]) -> None:
        series = self._series()
        epochs = self._epochs(series)
        truth = self._truth(epochs.n_epochs - 1)
        if truth is None:
            logger.warning("No ground truth; writing an empty AUC table")
        rows = []
        for detector in self.config.detectors:
            for condition, d_s in self._inputs(dims):
                report = ChangePointReport.from_dict(
                    read_json(self.report_path(detector, condition, d_s))
                )
                if truth is None:
                    continue
                if "sweep_auc" in report.metadata:
                    auc = float(report.metadata["sweep_auc"])
                else:
                    auc = roc_from_scores(report.scores, truth).auc
                rows.append(
                    {
                        "detector": detector.value,
                        "condition": condition.value,
                        "d_s": d_s,
                        "auc": auc,
                    }
                )
        frame = pd.DataFrame(rows, columns=["detector", "condition", "d_s", "auc"])
        frame["d_s"] = frame["d_s"].astype("Int64")
        write_frame(self.out / "auc.csv", frame)

    def _experiment_paths(self) -> list[Path]:
        paths = []
        if self.config.experiment is not None:
            paths += [self.out / "experiment.csv", self.out / "experiment.json"]
        if self.config.order_study is not None:
            paths += [
                self.out / "order_study.csv",
                self.out / "order_study_choices.csv",
            ]
        return paths

    def _experiment(self) -> None:
        if self.config.experiment is not None:
            result = run_experiment(self.config.experiment)
            write_frame(self.out / "experiment.csv", result.summary())
            write_json(self.out / "experiment.json", result.to_dict())
        if self.config.order_study is not None:
            study = run_order_study(self.config.order_study)
            write_frame(self.out / "order_study.csv", study.mean_p_values())
            write_frame(self.out / "order_study_choices.csv", study.chosen)


def run_pipeline(config: PipelineConfig) -> PipelineOutcome:
    """Run a pipeline config end to end."""
    return Pipeline(config).run()
