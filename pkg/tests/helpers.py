"""Builders for test data that take parameters."""

import numpy as np

from ssa_changepoint.timeseries import EpochStats


def random_stats(rng: np.random.Generator, n: int, d: int) -> EpochStats:
    """Random means and well-conditioned SPD covariances."""
    means = rng.standard_normal((n, d))
    factors = rng.standard_normal((n, d, d))
    covs = factors @ np.transpose(factors, (0, 2, 1)) + d * np.eye(d)
    return EpochStats(means=means, covariances=covs, counts=np.full(n, 50))


def standard_stats(n: int, d: int, count: int = 100) -> EpochStats:
    """n epochs whose ML covariance is exactly I and whose mean is 0."""
    covs = np.tile(np.eye(d) * count / (count - 1), (n, 1, 1))
    return EpochStats(
        means=np.zeros((n, d)), covariances=covs, counts=np.full(n, count)
    )


RHO = 0.4
