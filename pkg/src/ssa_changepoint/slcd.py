"""Single linkage clustering of epochs under the symmetrized KL divergence."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.cluster import hierarchy
from scipy.spatial import distance

from ssa_changepoint.divergence import pairwise_symmetrized_kl
from ssa_changepoint.errors import ConfigError, SingularCovarianceError
from ssa_changepoint.report import ChangePointReport, DetectorKind
from ssa_changepoint.timeseries import epoch_stats, make_epochs

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from ssa_changepoint.timeseries import EpochStats, Epoching, TimeSeries

logger = logging.getLogger(__name__)

DEFAULT_REGULARIZATION = 1e-9


class SlcdConfig(BaseModel):
    """Epoching and cluster count for SLCD."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_epochs: int = Field(default=200, ge=2)
    k_clusters: int = Field(default=5, ge=1)
    regularization: float = Field(default=DEFAULT_REGULARIZATION, ge=0.0)


def regularize_covariances(
    covariances: NDArray[np.float64], strength: float = DEFAULT_REGULARIZATION
) -> NDArray[np.float64]:
    """Add strength * tr(Σ)/d * I to every covariance."""
    d = covariances.shape[-1]
    ridge = strength * np.trace(covariances, axis1=1, axis2=2) / d
    return covariances + ridge[:, np.newaxis, np.newaxis] * np.eye(d)


def slcd_distance_matrix(
    stats: EpochStats, regularization: float = DEFAULT_REGULARIZATION
) -> NDArray[np.float64]:
    """Symmetrized KL divergence between every pair of epoch Gaussians.

    Raises:
        SingularCovarianceError: If an epoch covariance is still singular
            after regularization.
    """
    covariances = regularize_covariances(stats.covariances, regularization)
    identity = np.eye(stats.dim)
    precisions = np.empty_like(covariances)
    for index, cov in enumerate(covariances):
        try:
            factor = linalg.cho_factor(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovarianceError(index, "after regularization") from exc
        precisions[index] = linalg.cho_solve(factor, identity)
    return pairwise_symmetrized_kl(stats.means, covariances, precisions)


def _canonical_labels(labels: NDArray[np.int64]) -> NDArray[np.int64]:
    # number clusters by first appearance along time
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def single_linkage_cluster(dist: NDArray[np.float64], k: int) -> NDArray[np.int64]:
    """Agglomerate epochs by single linkage until ``k`` clusters remain.

    Args:
        dist: Symmetric n x n distance matrix.
        k: Number of clusters, 1 <= k <= n.

    Returns:
        One label per epoch, numbered by first appearance.

    Raises:
        ConfigError: If k is out of range.
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        msg = f"need 1 <= k <= n, got k={k}, n={n}"
        raise ConfigError(msg)
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    condensed = distance.squareform(dist, checks=False)
    tree = hierarchy.linkage(condensed, method="single")
    labels = hierarchy.cut_tree(tree, n_clusters=k).ravel()
    return _canonical_labels(labels)


def slcd_detect(
    series: TimeSeries, config: SlcdConfig, epochs: Epoching | None = None
) -> ChangePointReport:
    """Report a change wherever neighbouring epochs fall in different clusters.

    The score of boundary i is the distance between epochs i and i + 1, which
    lets a ROC sweep threshold the fixed distance matrix directly.

    Args:
        series: Input series (raw, projected, or estimated sources).
        config: Detector settings.
        epochs: Evaluation epoching; defaults to ``config.n_epochs`` equal epochs.

    Returns:
        The report with tau = k.
    """
    if epochs is None:
        epochs = make_epochs(series, config.n_epochs)
    stats = epoch_stats(series, epochs)
    dist = slcd_distance_matrix(stats, config.regularization)
    labels = single_linkage_cluster(dist, min(config.k_clusters, epochs.n_epochs))
    flags = labels[1:] != labels[:-1]
    scores = np.diagonal(dist, offset=1)
    logger.info(
        "SLCD: %d epochs, %d clusters, %d change points",
        epochs.n_epochs,
        config.k_clusters,
        int(flags.sum()),
    )
    return ChangePointReport.from_flags(
        flags,
        scores,
        DetectorKind.SLCD,
        config.k_clusters,
        labels=labels.tolist(),
    )
