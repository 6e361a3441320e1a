"""Shared test fixtures."""

import numpy as np
import pytest

from ssa_changepoint.synth import SynthConfig, SynthDataset, generate
from ssa_changepoint.timeseries import (
    EpochStats,
    TimeSeries,
    epoch_stats,
    fit_whitening,
)
from tests.helpers import RHO


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test data."""
    return np.random.default_rng(20260101)


@pytest.fixture
def gaussian_series(rng: np.random.Generator) -> TimeSeries:
    """Stationary 3-channel series of 600 standard-normal samples."""
    return TimeSeries(rng.standard_normal((3, 600)))


@pytest.fixture
def small_dataset() -> SynthDataset:
    """D=4 dataset with two stationary and two switching sources."""
    return generate(
        SynthConfig(D=4, d_s=2, d_n=2, n_epochs=30, epoch_len=200, p=4.0, seed=7)
    )


@pytest.fixture
def whitened_stats(small_dataset: SynthDataset) -> EpochStats:
    """Whitened epoch statistics of ``small_dataset``."""
    raw = epoch_stats(small_dataset.series, small_dataset.epochs)
    return fit_whitening(raw).apply_stats(raw)


@pytest.fixture
def two_epoch_stats() -> EpochStats:
    """Two zero-mean epochs whose covariances differ only in the correlation sign.

    The average covariance is the identity, so the stats are already whitened.
    Along the direction at angle θ the objective is -log(1 - ρ² sin²2θ).
    """
    plus = np.array([[1.0, RHO], [RHO, 1.0]])
    minus = np.array([[1.0, -RHO], [-RHO, 1.0]])
    return EpochStats(
        means=np.zeros((2, 2)),
        covariances=np.stack([plus, minus]),
        counts=np.array([1000, 1000]),
    )


@pytest.fixture
def step_series(rng: np.random.Generator) -> TimeSeries:
    """Univariate series whose variance steps from 1 to 9 at t = 5000."""
    y = rng.standard_normal(10_000)
    y[5000:] *= 3.0
    return TimeSeries(y)

