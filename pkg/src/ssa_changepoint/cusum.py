"""Weighted CUSUM for changes in the variance of a univariate stream.

Each window of W samples is compared against the reference variance θ₀ by
the likelihood ratio averaged over a uniform grid of candidate variances,
in closed form from the window's sum of squares. An alarm is raised at the
first window whose log ratio reaches the threshold h; θ₀ is then
re-estimated from the next W samples and monitoring resumes after them.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special

from ssa_changepoint.errors import (
    ArityError,
    ConfigError,
    DivisionDegeneracyError,
    TooFewSamplesError,
)
from ssa_changepoint.evaluation import roc_from_flag_sweep
from ssa_changepoint.report import ChangePointReport, DetectorKind
from ssa_changepoint.timeseries import make_epochs

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from ssa_changepoint.evaluation import RocCurve
    from ssa_changepoint.timeseries import Epoching, TimeSeries

logger = logging.getLogger(__name__)

N_SWEEP_THRESHOLDS = 32
MIN_SWEEP_THRESHOLD = 1e-2


class CusumConfig(BaseModel):
    """Window, threshold and variance grid of the weighted CUSUM."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_epochs: int = Field(default=100, ge=2)
    window: int = Field(default=50, ge=2)
    threshold: float = 10.0
    grid_low: float = Field(default=0.2, gt=0.0)
    grid_high: float = Field(default=5.0, gt=0.0)
    grid_points: int = Field(default=25, ge=1)
    theta_grid: tuple[float, ...] | None = None
    alarm_mapping: Literal["nearest", "after"] = "nearest"

    @model_validator(mode="after")
    def _ordered_grid(self) -> CusumConfig:
        if self.grid_high < self.grid_low:
            msg = f"grid_high {self.grid_high} is below grid_low {self.grid_low}"
            raise ValueError(msg)
        return self

    def grid(self, theta0: float) -> tuple[NDArray[np.float64], float]:
        """Candidate variances and their spacing b for reference θ₀.

        Without an explicit ``theta_grid`` the grid is
        {c, c + b, ..., d} with c = grid_low·θ₀ and d = grid_high·θ₀.

        Raises:
            ConfigError: If any grid value is not positive.
        """
        if self.theta_grid is not None:
            thetas = np.asarray(self.theta_grid, dtype=np.float64)
            if np.any(thetas <= 0):
                msg = f"theta_grid values must be positive, got {self.theta_grid}"
                raise ConfigError(msg)
            spacing = float(np.mean(np.diff(thetas))) if thetas.size > 1 else 1.0
            return thetas, spacing
        thetas = np.linspace(
            self.grid_low * theta0, self.grid_high * theta0, self.grid_points
        )
        spacing = float(thetas[1] - thetas[0]) if thetas.size > 1 else 1.0
        return thetas, spacing


def cusum_log_statistic(
    sum_sq: ArrayLike,
    n: int,
    theta0: float,
    thetas: ArrayLike,
    spacing: float,
) -> NDArray[np.float64]:
    """ln Λ̃ = ln[(1/b) Σₖ p_θₖ(y) / p_θ₀(y)] for zero-mean Gaussian windows.

    Args:
        sum_sq: Sum of squares of each window (any shape).
        n: Window length.
        theta0: Reference variance.
        thetas: Candidate variances.
        spacing: Grid spacing b.

    Returns:
        Array shaped like ``sum_sq``.
    """
    s = np.asarray(sum_sq, dtype=np.float64)[..., np.newaxis]
    theta = np.asarray(thetas, dtype=np.float64)
    log_ratio = -0.5 * n * np.log(theta / theta0) - 0.5 * s * (
        1.0 / theta - 1.0 / theta0
    )
    return special.logsumexp(log_ratio, axis=-1) - np.log(spacing)


def _reference_variance(y: NDArray[np.float64], start: int, window: int) -> float:
    theta0 = float(np.mean(y[start : start + window] ** 2))
    if theta0 <= 0:
        msg = f"reference window starting at {start} has zero variance"
        raise DivisionDegeneracyError(msg)
    return theta0


def cusum_scan(
    y: NDArray[np.float64], config: CusumConfig, threshold: float
) -> tuple[list[int], NDArray[np.float64]]:
    """Run the sequential scan over a whole stream.

    Returns:
        Alarm times (index of the last sample of the alarming window) and the
        log statistic of every evaluated window indexed by its last sample
        (NaN for windows never evaluated).
    """
    window = config.window
    n_samples = y.size
    cumulative = np.concatenate([[0.0], np.cumsum(y**2)])
    statistic = np.full(n_samples, np.nan)
    alarms: list[int] = []
    change_time = 0
    while change_time + 2 * window <= n_samples:
        theta0 = _reference_variance(y, change_time, window)
        thetas, spacing = config.grid(theta0)
        starts = np.arange(change_time + window, n_samples - window + 1)
        sums = cumulative[starts + window] - cumulative[starts]
        values = cusum_log_statistic(sums, window, theta0, thetas, spacing)
        hits = np.flatnonzero(values >= threshold)
        stop = hits[0] + 1 if hits.size else values.size
        ends = starts[:stop] + window - 1
        statistic[ends] = values[:stop]
        if not hits.size:
            break
        alarm = int(ends[-1])
        alarms.append(alarm)
        logger.debug("CUSUM alarm at %d (θ₀=%.4g)", alarm, theta0)
        change_time = alarm + 1
    return alarms, statistic


def map_to_boundaries(
    times: Sequence[int] | NDArray[np.intp],
    boundaries: Sequence[int],
    mapping: Literal["nearest", "after"] = "nearest",
) -> NDArray[np.intp]:
    """Boundary index for each sample time (-1 where none applies)."""
    positions = np.asarray(boundaries, dtype=np.int64)
    samples = np.asarray(times, dtype=np.int64)
    if mapping == "after":
        index = np.searchsorted(positions, samples, side="left")
        return np.where(index < positions.size, index, -1)
    return np.argmin(np.abs(samples[:, np.newaxis] - positions[np.newaxis, :]), axis=1)


def _require_univariate(series: TimeSeries) -> None:
    if series.n_channels != 1:
        msg = (
            f"CUSUM is a univariate method but the input has {series.n_channels} "
            "channels; select one channel first"
        )
        raise ArityError(msg)


def cusum_detect(
    series: TimeSeries,
    config: CusumConfig,
    epochs: Epoching | None = None,
    *,
    threshold: float | None = None,
) -> ChangePointReport:
    """Run the weighted CUSUM and report alarms on the epoch boundaries.

    Args:
        series: A single-channel series.
        config: Detector settings.
        epochs: Evaluation epoching; defaults to ``config.n_epochs`` equal epochs.
        threshold: Overrides ``config.threshold``.

    Returns:
        The report with tau = h. The score of a boundary is the largest log
        statistic among the evaluated windows mapped to it.

    Raises:
        ArityError: If the series has more than one channel.
        TooFewSamplesError: If the series is shorter than two windows.
    """
    _require_univariate(series)
    if series.n_samples < 2 * config.window:
        needed = 2 * config.window
        msg = f"CUSUM needs at least {needed} samples, got {series.n_samples}"
        raise TooFewSamplesError(msg)
    if epochs is None:
        epochs = make_epochs(series, config.n_epochs)
    h = config.threshold if threshold is None else threshold
    boundaries = epochs.boundaries
    alarms, statistic = cusum_scan(series.data[0], config, h)
    flags = np.zeros(len(boundaries), dtype=bool)
    if alarms and boundaries:
        mapped = map_to_boundaries(alarms, boundaries, config.alarm_mapping)
        flags[mapped[mapped >= 0]] = True
    scores = np.full(len(boundaries), np.nan)
    evaluated = np.flatnonzero(np.isfinite(statistic))
    if boundaries and evaluated.size:
        nearest = map_to_boundaries(evaluated, boundaries)
        np.fmax.at(scores, nearest, statistic[evaluated])
    floor = np.nanmin(scores) if np.any(np.isfinite(scores)) else 0.0
    scores = np.where(np.isfinite(scores), scores, floor)
    logger.info(
        "CUSUM: %d alarms, %d flagged boundaries at h=%g",
        len(alarms),
        int(flags.sum()),
        h,
    )
    return ChangePointReport.from_flags(
        flags, scores, DetectorKind.CUSUM, h, alarms=alarms, window=config.window
    )


def threshold_grid(
    statistic: NDArray[np.float64], n_points: int = N_SWEEP_THRESHOLDS
) -> NDArray[np.float64]:
    """Log-spaced thresholds from 1e-2 to just above the largest statistic."""
    finite = statistic[np.isfinite(statistic)]
    top = float(finite.max()) * 1.01 if finite.size else 1.0
    top = max(top, 10.0 * MIN_SWEEP_THRESHOLD)
    return np.geomspace(MIN_SWEEP_THRESHOLD, top, n_points)


def cusum_roc(
    series: TimeSeries,
    config: CusumConfig,
    truth: ArrayLike,
    epochs: Epoching | None = None,
    thresholds: ArrayLike | None = None,
) -> RocCurve:
    """ROC of the CUSUM obtained by re-running it over a sweep of h.

    Without explicit ``thresholds`` the sweep is a 32-point log grid up to
    the largest statistic of an alarm-free scan.
    """
    _require_univariate(series)
    if epochs is None:
        epochs = make_epochs(series, config.n_epochs)
    if thresholds is None:
        _, statistic = cusum_scan(series.data[0], config, np.inf)
        sweep = threshold_grid(statistic)
    else:
        sweep = np.asarray(thresholds, dtype=np.float64)
    flag_sets = [
        cusum_detect(series, config, epochs, threshold=float(h)).epoch_boundaries
        for h in sweep
    ]
    return roc_from_flag_sweep(flag_sets, truth, sweep.tolist())
