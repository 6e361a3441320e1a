"""Multichannel time series, epoching, epoch moments and whitening."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg

from ssa_changepoint.errors import (
    DegenerateEpochError,
    DimensionMismatchError,
    RankDeficiencyError,
    TooFewSamplesError,
    ValidationError,
)

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12


def _frozen(array: ArrayLike, dtype: type = np.float64) -> NDArray[Any]:
    """Return a read-only copy of ``array``."""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def symmetrize(matrices: NDArray[np.float64]) -> NDArray[np.float64]:
    """Return (M + Mᵀ)/2 over the last two axes."""
    return 0.5 * (matrices + np.swapaxes(matrices, -1, -2))


def array_to_json(array: NDArray[Any]) -> dict[str, Any]:
    """Serialize an array as ``{"shape": [...], "data": [row-major values]}``."""
    array = np.asarray(array)
    return {"shape": list(array.shape), "data": array.ravel(order="C").tolist()}


def array_from_json(payload: dict[str, Any]) -> NDArray[np.float64]:
    """Inverse of :func:`array_to_json`."""
    return np.asarray(payload["data"], dtype=np.float64).reshape(payload["shape"])


@dataclass(frozen=True)
class TimeSeries:
    """A D-channel signal sampled at T time points (stored D x T)."""

    data: NDArray[np.float64]
    channel_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        """Validate shape and finiteness, then freeze the sample matrix."""
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:  # noqa: PLR2004
            msg = f"time series data must be 2-D (D x T), got shape {data.shape}"
            raise ValidationError(msg)
        n_channels, n_samples = data.shape
        if n_channels < 1 or n_samples < 2:  # noqa: PLR2004
            msg = f"need D >= 1 and T >= 2, got D={n_channels}, T={n_samples}"
            raise ValidationError(msg)
        if not np.all(np.isfinite(data)):
            msg = "time series contains non-finite values"
            raise ValidationError(msg)
        if self.channel_names is not None:
            names = tuple(self.channel_names)
            if len(names) != n_channels:
                msg = f"{len(names)} channel names for {n_channels} channels"
                raise DimensionMismatchError(msg)
            object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_samples(
        cls,
        samples: ArrayLike,
        channel_names: Sequence[str] | None = None,
    ) -> TimeSeries:
        """Build a series from a T x D sample matrix (one row per time point)."""
        rows = np.asarray(samples, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, np.newaxis]
        names = tuple(channel_names) if channel_names is not None else None
        return cls(data=rows.T, channel_names=names)

    @property
    def n_channels(self) -> int:
        """Number of channels D."""
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        """Number of time points T."""
        return self.data.shape[1]

    def samples(self) -> NDArray[np.float64]:
        """Return the T x D sample matrix."""
        return self.data.T

    def channel(self, index: int) -> TimeSeries:
        """Return a single-channel series."""
        name = None if self.channel_names is None else (self.channel_names[index],)
        return TimeSeries(self.data[index : index + 1], channel_names=name)

    def slice_time(self, start: int, stop: int) -> TimeSeries:
        """Return the samples in ``[start, stop)`` as a new series."""
        return TimeSeries(self.data[:, start:stop], channel_names=self.channel_names)

    def permute_time(self, permutation: NDArray[np.intp]) -> TimeSeries:
        """Return the series with its time axis reordered."""
        return TimeSeries(self.data[:, permutation], channel_names=self.channel_names)

    def project(self, matrix: ArrayLike) -> TimeSeries:
        """Apply a d x D linear map to every sample."""
        projection = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if projection.shape[1] != self.n_channels:
            msg = (
                f"projection has {projection.shape[1]} columns, "
                f"series has {self.n_channels} channels"
            )
            raise DimensionMismatchError(msg)
        return TimeSeries(projection @ self.data)


@dataclass(frozen=True)
class Epoching:
    """Contiguous, non-overlapping epochs given by their n+1 sample edges."""

    edges: tuple[int, ...]

    def __post_init__(self) -> None:
        """Check that edges are strictly increasing and epochs estimable."""
        edges = tuple(int(e) for e in self.edges)
        if len(edges) < 2 or edges[0] < 0:  # noqa: PLR2004
            msg = f"invalid epoch edges {edges}"
            raise ValidationError(msg)
        lengths = np.diff(edges)
        if np.any(lengths < 2):  # noqa: PLR2004
            msg = f"every epoch needs >= 2 samples, got lengths {lengths.tolist()}"
            raise DegenerateEpochError(msg)
        object.__setattr__(self, "edges", edges)

    @property
    def n_epochs(self) -> int:
        """Number of epochs n."""
        return len(self.edges) - 1

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Interior sample indices where one epoch ends and the next begins."""
        return self.edges[1:-1]

    @property
    def lengths(self) -> tuple[int, ...]:
        """Number of samples in each epoch."""
        return tuple(int(n) for n in np.diff(self.edges))

    @property
    def stop(self) -> int:
        """One past the last sample covered by the epoching."""
        return self.edges[-1]

    def slices(self) -> Iterator[slice]:
        """Yield one ``slice`` per epoch."""
        for start, stop in zip(self.edges[:-1], self.edges[1:], strict=True):
            yield slice(start, stop)

    def epoch_of(self, sample: int) -> int:
        """Return the epoch index containing ``sample``."""
        return int(np.searchsorted(self.edges, sample, side="right")) - 1


@dataclass(frozen=True)
class EpochStats:
    """Per-epoch sample means, unbiased covariances and sample counts."""

    means: NDArray[np.float64]  # n x d
    covariances: NDArray[np.float64]  # n x d x d
    counts: NDArray[np.int64]  # n

    def __post_init__(self) -> None:
        """Check consistent lengths and dimensions, then freeze."""
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covs = np.asarray(self.covariances, dtype=np.float64)
        if covs.ndim == 1:
            covs = covs[:, np.newaxis, np.newaxis]
        counts = np.asarray(self.counts, dtype=np.int64)
        n, d = means.shape
        if covs.shape != (n, d, d) or counts.shape != (n,):
            msg = (
                f"inconsistent epoch stats: means {means.shape}, "
                f"covariances {covs.shape}, counts {counts.shape}"
            )
            raise DimensionMismatchError(msg)
        if np.any(counts < 1):
            msg = "epoch counts must be positive"
            raise ValidationError(msg)
        object.__setattr__(self, "means", _frozen(means))
        object.__setattr__(self, "covariances", _frozen(symmetrize(covs)))
        object.__setattr__(self, "counts", _frozen(counts, dtype=np.int64))

    @property
    def n_epochs(self) -> int:
        """Number of epochs n."""
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        """Dimension d of each epoch distribution."""
        return self.means.shape[1]

    def average_mean(self) -> NDArray[np.float64]:
        """Unweighted average of the epoch means, (1/n) Σ μ̂ᵢ."""
        return self.means.mean(axis=0)

    def average_covariance(
        self, *, include_mean_scatter: bool = False
    ) -> NDArray[np.float64]:
        """Average epoch covariance.

        Args:
            include_mean_scatter: When True, add the between-epoch scatter of
                the means, giving the pooled second moment of the centered
                data instead of the plain average (1/n) Σ Σ̂ᵢ.

        Returns:
            A symmetric d x d matrix.
        """
        average = self.covariances.mean(axis=0)
        if include_mean_scatter:
            centered = self.means - self.average_mean()
            average = average + centered.T @ centered / self.n_epochs
        return symmetrize(average)

    def ml_covariances(self) -> NDArray[np.float64]:
        """Maximum-likelihood covariances (divisor Nᵢ instead of Nᵢ - 1)."""
        scale = (self.counts - 1) / self.counts
        return self.covariances * scale[:, np.newaxis, np.newaxis]

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict."""
        return {
            "means": array_to_json(self.means),
            "covariances": array_to_json(self.covariances),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> EpochStats:
        """Inverse of :meth:`to_dict`."""
        return cls(
            means=array_from_json(payload["means"]),
            covariances=array_from_json(payload["covariances"]),
            counts=np.asarray(payload["counts"], dtype=np.int64),
        )


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map x ↦ W (x - shift) normalizing the average epoch."""

    shift: NDArray[np.float64]
    matrix: NDArray[np.float64]
    include_mean_scatter: bool = field(default=False)

    def __post_init__(self) -> None:
        """Check shapes and freeze."""
        shift = np.atleast_1d(np.asarray(self.shift, dtype=np.float64))
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        if matrix.shape != (shift.size, shift.size):
            msg = f"whitening matrix {matrix.shape} does not match shift {shift.shape}"
            raise DimensionMismatchError(msg)
        object.__setattr__(self, "shift", _frozen(shift))
        object.__setattr__(self, "matrix", _frozen(matrix))

    @property
    def dim(self) -> int:
        """Input dimension D."""
        return self.shift.size

    def apply(self, series: TimeSeries) -> TimeSeries:
        """Whiten every sample of ``series``."""
        if series.n_channels != self.dim:
            msg = f"transform expects {self.dim} channels, got {series.n_channels}"
            raise DimensionMismatchError(msg)
        centered = series.data - self.shift[:, np.newaxis]
        return TimeSeries(self.matrix @ centered, channel_names=series.channel_names)

    def apply_stats(self, stats: EpochStats) -> EpochStats:
        """Whiten epoch statistics without revisiting the samples."""
        if stats.dim != self.dim:
            msg = f"transform expects dimension {self.dim}, got {stats.dim}"
            raise DimensionMismatchError(msg)
        shifted = EpochStats(stats.means - self.shift, stats.covariances, stats.counts)
        return transform_stats(shifted, self.matrix)

    def inverse_matrix(self) -> NDArray[np.float64]:
        """Return W⁻¹ (the un-whitening map without the shift)."""
        return np.linalg.inv(self.matrix)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict."""
        return {
            "shift": array_to_json(self.shift),
            "matrix": array_to_json(self.matrix),
            "include_mean_scatter": self.include_mean_scatter,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> WhiteningTransform:
        """Inverse of :meth:`to_dict`."""
        return cls(
            shift=array_from_json(payload["shift"]),
            matrix=array_from_json(payload["matrix"]),
            include_mean_scatter=bool(payload.get("include_mean_scatter", False)),
        )


def make_epochs(series: TimeSeries, n_epochs: int) -> Epoching:
    """Divide a series into ``n_epochs`` equal-length contiguous epochs.

    Trailing samples that do not fill a whole epoch are discarded so that all
    epochs hold the same number of points.

    Args:
        series: The series to divide.
        n_epochs: Number of epochs, at least 2.

    Returns:
        The epoching.

    Raises:
        ValidationError: If ``n_epochs < 2``.
        TooFewSamplesError: If T < 2 * n_epochs.
    """
    if n_epochs < 2:  # noqa: PLR2004
        msg = f"n_epochs must be >= 2, got {n_epochs}"
        raise ValidationError(msg)
    if series.n_samples < 2 * n_epochs:
        msg = (
            f"{series.n_samples} samples cannot fill {n_epochs} epochs "
            "of at least 2 samples"
        )
        raise TooFewSamplesError(msg)
    length = series.n_samples // n_epochs
    dropped = series.n_samples - length * n_epochs
    if dropped:
        logger.debug("Discarding %d trailing samples", dropped)
    return Epoching(edges=tuple(range(0, length * n_epochs + 1, length)))


def epoch_stats(series: TimeSeries, epochs: Epoching) -> EpochStats:
    """Estimate the mean and unbiased covariance of every epoch.

    Args:
        series: The observed series.
        epochs: Epoching over the series.

    Returns:
        EpochStats with covariances using the divisor |𝒯ᵢ| - 1.

    Raises:
        TooFewSamplesError: If the epoching runs past the end of the series.
    """
    if epochs.stop > series.n_samples:
        msg = (
            f"epoching ends at {epochs.stop} "
            f"but series has {series.n_samples} samples"
        )
        raise TooFewSamplesError(msg)
    means = []
    covariances = []
    for block in epochs.slices():
        samples = series.data[:, block]
        means.append(samples.mean(axis=1))
        covariances.append(np.atleast_2d(np.cov(samples, ddof=1)))
    return EpochStats(
        means=np.array(means),
        covariances=np.array(covariances),
        counts=np.array(epochs.lengths, dtype=np.int64),
    )


def inverse_sqrt(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Symmetric inverse square root of a positive-definite matrix.

    Raises:
        RankDeficiencyError: If the smallest eigenvalue is below 1e-12 times
            the largest.
    """
    eigenvalues, eigenvectors = linalg.eigh(symmetrize(matrix))
    largest = eigenvalues[-1]
    if largest <= 0 or eigenvalues[0] < RANK_TOLERANCE * largest:
        msg = (
            f"average covariance is rank deficient "
            f"(eigenvalues {eigenvalues[0]:.3g} .. {largest:.3g})"
        )
        raise RankDeficiencyError(msg)
    return symmetrize((eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T)


def fit_whitening(
    stats: EpochStats, *, include_mean_scatter: bool = False
) -> WhiteningTransform:
    """Fit the centering and whitening transform of the average epoch.

    After the transform, the average epoch mean is zero and the average epoch
    covariance is the identity. By default the average covariance is the
    plain mean of the epoch covariances; ``include_mean_scatter=True`` also
    counts the scatter of the epoch means (pooled second moment).

    Args:
        stats: Epoch statistics of the raw series.
        include_mean_scatter: Select the pooled second-moment reading.

    Returns:
        The fitted transform with W = Σ̄^(-1/2).
    """
    shift = stats.average_mean()
    average = stats.average_covariance(include_mean_scatter=include_mean_scatter)
    return WhiteningTransform(
        shift=shift,
        matrix=inverse_sqrt(average),
        include_mean_scatter=include_mean_scatter,
    )


def transform_stats(stats: EpochStats, projection: ArrayLike) -> EpochStats:
    """Map epoch statistics through a d x D linear projection.

    Returns:
        EpochStats with means Bμ̂ᵢ and covariances BΣ̂ᵢBᵀ.

    Raises:
        DimensionMismatchError: If the projection does not have D columns.
    """
    matrix = np.atleast_2d(np.asarray(projection, dtype=np.float64))
    if matrix.shape[1] != stats.dim:
        msg = (
            f"projection has {matrix.shape[1]} columns, "
            f"stats have dimension {stats.dim}"
        )
        raise DimensionMismatchError(msg)
    means = stats.means @ matrix.T
    covariances = np.einsum("ab,nbc,dc->nad", matrix, stats.covariances, matrix)
    return EpochStats(means=means, covariances=covariances, counts=stats.counts)
