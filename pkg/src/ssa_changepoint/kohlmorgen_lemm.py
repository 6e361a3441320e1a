"""Kohlmorgen/Lemm segmentation with kernel density estimates as states.

Every epoch window is embedded as a Gaussian-kernel density estimate. The
state sequence minimizing

    Σᵢ d(state(i), window i) + C · (number of state changes)

over states drawn from the windows themselves is found by dynamic
programming. A change point is reported wherever consecutive epochs get
different states.
"""

from __future__ import annotations

import logging
import math
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import KDTree, distance

from ssa_changepoint.errors import (
    ConfigError,
    DimensionMismatchError,
    TooFewSamplesError,
    ValidationError,
    ZeroSigmaError,
)
from ssa_changepoint.report import ChangePointReport, DetectorKind
from ssa_changepoint.timeseries import make_epochs

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from ssa_changepoint.timeseries import Epoching, TimeSeries

logger = logging.getLogger(__name__)

N_COST_GRID = 32
MAX_SIGMA_POINTS = 1000


class SegmentationMode(StrEnum):
    """Free segmentation or a fixed number of change points."""

    FREE = "free"
    FIXED = "fixed"


class KohlLemmConfig(BaseModel):
    """Windows, kernel width and transition cost of the segmentation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_epochs: int = Field(default=100, ge=2)
    window: int | None = Field(default=None, ge=1)
    sigma: float | None = Field(default=None, gt=0.0)
    sigma_scale: float = Field(default=1.0, gt=0.0)
    cost: float | None = Field(default=None, ge=0.0)
    mode: SegmentationMode = SegmentationMode.FREE
    n_changepoints: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _fixed_needs_count(self) -> KohlLemmConfig:
        if self.mode is SegmentationMode.FIXED and self.n_changepoints is None:
            msg = "fixed mode needs n_changepoints"
            raise ValueError(msg)
        return self


def _kernel_sum(a: NDArray[np.float64], b: NDArray[np.float64], sigma: float) -> float:
    return float(np.exp(-distance.cdist(a, b, "sqeuclidean") / (4.0 * sigma**2)).sum())


def _normalizer(window: int, dim: int, sigma: float) -> float:
    return 1.0 / (window**2 * (4.0 * math.pi * sigma**2) ** (dim / 2))


def _as_window(samples: ArrayLike) -> NDArray[np.float64]:
    array = np.asarray(samples, dtype=np.float64)
    return array[:, np.newaxis] if array.ndim == 1 else array


def kohlmorgen_lemm_distance(
    epoch_a: ArrayLike, epoch_b: ArrayLike, sigma: float
) -> float:
    """Squared L2 distance between the kernel density estimates of two windows.

    Args:
        epoch_a: W x d samples.
        epoch_b: W x d samples.
        sigma: Kernel width.

    Returns:
        A non-negative distance, zero for identical sample sets.

    Raises:
        DimensionMismatchError: If the windows differ in shape.
        ConfigError: If sigma is not positive.
    """
    a = _as_window(epoch_a)
    b = _as_window(epoch_b)
    if a.shape != b.shape:
        msg = f"windows must have equal shape, got {a.shape} and {b.shape}"
        raise DimensionMismatchError(msg)
    if sigma <= 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ConfigError(msg)
    window, dim = a.shape
    cross = _kernel_sum(a, b, sigma)
    total = _kernel_sum(a, a, sigma) - 2.0 * cross + _kernel_sum(b, b, sigma)
    return max(_normalizer(window, dim, sigma) * total, 0.0)


def kohlmorgen_lemm_distance_matrix(
    windows: NDArray[np.float64], sigma: float
) -> NDArray[np.float64]:
    """Pairwise distances between n windows given as an n x W x d array."""
    n, window, dim = windows.shape
    self_terms = np.array([_kernel_sum(w, w, sigma) for w in windows])
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            cross = _kernel_sum(windows[i], windows[j], sigma)
            dist[i, j] = dist[j, i] = self_terms[i] - 2.0 * cross + self_terms[j]
    return np.maximum(_normalizer(window, dim, sigma) * dist, 0.0)


def kl_sigma_rule(
    series: TimeSeries,
    window: int | None = None,
    *,
    scale: float = 1.0,
    max_points: int | None = MAX_SIGMA_POINTS,
) -> float:
    """Kernel width from the mean distance of points to their D nearest neighbours.

    The rule is not evaluated on every sample but on a sample set of points
    spread evenly over the series, so the width matches the resolution of a
    density estimate built from that many points. The set holds ``window``
    points when given, otherwise ``max_points``. Only with ``window`` None and
    ``max_points`` None (or at least T) does the result equal the all-pairs
    nearest-neighbour mean over the whole series.

    Args:
        series: Input series.
        window: Number of points per density estimate.
        scale: Proportionality constant applied to the mean distance.
        max_points: Size of the sample set when ``window`` is None; None uses
            every sample.

    Raises:
        TooFewSamplesError: If the sample set holds no more than D + 1 points.
        ZeroSigmaError: If the resulting width is zero.
    """
    points = series.samples()
    n_samples, dim = points.shape
    size = window if window is not None else max_points
    size = n_samples if size is None else min(n_samples, size)
    if size <= dim + 1:
        msg = f"sigma rule needs more than {dim + 1} sample points, got {size}"
        raise TooFewSamplesError(msg)
    index = np.round(np.linspace(0, n_samples - 1, size)).astype(np.intp)
    sample = points[index]
    distances, _ = KDTree(sample).query(sample, k=dim + 1)
    # column 0 is the query point itself
    sigma = scale * float(np.mean(distances[:, 1:]))
    if sigma <= 0:
        msg = "all sampled points coincide with their neighbours; sigma is zero"
        raise ZeroSigmaError(msg)
    return sigma


def _epoch_windows(
    series: TimeSeries, epochs: Epoching, window: int | None
) -> NDArray[np.float64]:
    length = min(epochs.lengths)
    size = length if window is None else window
    if size > length:
        msg = f"window {size} is longer than the shortest epoch ({length} samples)"
        raise ValidationError(msg)
    samples = series.samples()
    return np.stack(
        [samples[block.start : block.start + size] for block in epochs.slices()]
    )


def segment_free(dist: NDArray[np.float64], cost: float) -> NDArray[np.int64]:
    """Viterbi path over states = epochs with a per-change penalty.

    Ties prefer keeping the current state, then the lowest state index.
    """
    n = dist.shape[0]
    value = dist[:, 0].copy()
    stay = np.zeros((n, n), dtype=bool)
    jump_from = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        best = int(np.argmin(value))
        switch = value[best] + cost
        stay[i] = value <= switch
        jump_from[i] = best
        value = dist[:, i] + np.minimum(value, switch)
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmin(value))
    for i in range(n - 1, 0, -1):
        path[i - 1] = path[i] if stay[i, path[i]] else jump_from[i]
    return path


def segment_fixed(dist: NDArray[np.float64], n_changes: int) -> NDArray[np.int64]:
    """Minimum-distance state path with exactly ``n_changes`` state changes.

    Raises:
        ConfigError: If more changes are requested than there are boundaries.
    """
    n = dist.shape[0]
    if n_changes > n - 1:
        msg = f"cannot place {n_changes} changes on {n - 1} boundaries"
        raise ConfigError(msg)
    states = np.arange(n)
    value = np.full((n_changes + 1, n), np.inf)
    value[0] = dist[:, 0]
    # a jump into state s comes from the best other state: best[i, m, 0]
    # unless s is that state, then the runner-up best[i, m, 1]
    jumped = np.zeros((n, n_changes + 1, n), dtype=bool)
    best = np.zeros((n, n_changes + 1, 2), dtype=np.intp)
    for i in range(1, n):
        new = np.full_like(value, np.inf)
        new[0] = dist[:, i] + value[0]
        for m in range(1, n_changes + 1):
            stay_value = value[m]
            previous = value[m - 1]
            first, second = np.argsort(previous, kind="stable")[:2]
            best[i, m] = first, second
            jump_value = np.where(states == first, previous[second], previous[first])
            use_jump = jump_value < stay_value
            jumped[i, m] = use_jump
            new[m] = dist[:, i] + np.where(use_jump, jump_value, stay_value)
        value = new
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmin(value[n_changes]))
    m = n_changes
    for i in range(n - 1, 0, -1):
        state = path[i]
        if jumped[i, m, state]:
            first, second = best[i, m]
            path[i - 1] = second if state == first else first
            m -= 1
        else:
            path[i - 1] = state
    return path


def cost_grid(
    dist: NDArray[np.float64], n_points: int = N_COST_GRID
) -> NDArray[np.float64]:
    """Log-spaced transition costs from one state per epoch to a single state."""
    positive = dist[dist > 0]
    if positive.size == 0:
        return np.geomspace(1e-12, 1.0, n_points)
    low = 1e-3 * float(positive.mean())
    high = dist.shape[0] * float(positive.max())
    return np.geomspace(low, high, n_points)


def critical_costs(
    dist: NDArray[np.float64], costs: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Largest cost in ``costs`` at which each boundary is still reported.

    Boundaries never reported score 0.
    """
    scores = np.zeros(dist.shape[0] - 1)
    for cost in np.sort(costs):
        path = segment_free(dist, float(cost))
        scores[path[1:] != path[:-1]] = cost
    return scores


def kohlmorgen_lemm_detect(
    series: TimeSeries, config: KohlLemmConfig, epochs: Epoching | None = None
) -> ChangePointReport:
    """Segment a series into density states and report state changes.

    Args:
        series: Input series (raw, projected, or estimated sources).
        config: Detector settings.
        epochs: Evaluation epoching; defaults to ``config.n_epochs`` equal epochs.

    Returns:
        The report. In both modes each boundary scores the largest C on a
        32-point grid at which free segmentation still reports it, so the
        ROC sweeps C. In free mode tau is the transition cost C; in fixed
        mode it is the number of change points.
    """
    if epochs is None:
        epochs = make_epochs(series, config.n_epochs)
    windows = _epoch_windows(series, epochs, config.window)
    sigma = config.sigma
    if sigma is None:
        sigma = kl_sigma_rule(series, windows.shape[1], scale=config.sigma_scale)
    logger.info("Kohlmorgen/Lemm kernel width sigma=%.6g", sigma)
    dist = kohlmorgen_lemm_distance_matrix(windows, sigma)
    scores = critical_costs(dist, cost_grid(dist))
    if config.mode is SegmentationMode.FIXED:
        n_changes = config.n_changepoints or 0
        path = segment_fixed(dist, n_changes)
        tau = float(n_changes)
    else:
        positive = dist[dist > 0]
        cost = config.cost
        if cost is None:
            cost = float(np.median(positive)) if positive.size else 0.0
        path = segment_free(dist, cost)
        tau = cost
    flags = path[1:] != path[:-1]
    logger.info("Kohlmorgen/Lemm: %d change points at tau=%g", int(flags.sum()), tau)
    return ChangePointReport.from_flags(
        flags,
        scores,
        DetectorKind.KL,
        tau,
        sigma=sigma,
        window=int(windows.shape[1]),
        mode=config.mode.value,
        states=path.tolist(),
    )
