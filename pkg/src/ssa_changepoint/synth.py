"""Synthetic benchmark: mixtures of stationary and Markov-switching sources."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ssa_changepoint.errors import ConfigError, NumericalError
from ssa_changepoint.timeseries import Epoching, TimeSeries, array_to_json

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

N_GRID_POINTS = 5


class MixingKind(StrEnum):
    """Ensemble the mixing matrix A is drawn from."""

    RANDOM_ORTHOGONAL = "random_orthogonal"
    RANDOM_CONDITIONED = "random_conditioned"
    IDENTITY = "identity"


class SynthConfig(BaseModel):
    """Shape and randomness of one synthetic dataset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    D: int = Field(ge=1)
    d_s: int = Field(ge=0)
    d_n: int = Field(ge=0)
    n_epochs: int = Field(default=100, ge=2)
    epoch_len: int = Field(default=500, ge=2)
    p: float = Field(default=2.0, gt=1.0)
    n_states: int = Field(default=5, ge=2)
    p_stay: float = Field(default=0.9, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    mixing: MixingKind = MixingKind.RANDOM_ORTHOGONAL
    condition_number: float = Field(default=10.0, ge=1.0)

    @model_validator(mode="after")
    def _dimensions_add_up(self) -> SynthConfig:
        if self.d_s + self.d_n != self.D:
            msg = f"d_s + d_n must equal D, got {self.d_s} + {self.d_n} != {self.D}"
            raise ValueError(msg)
        return self

    @property
    def p_leave(self) -> float:
        """Probability of moving to one particular other state."""
        return (1.0 - self.p_stay) / (self.n_states - 1)

    def transition_matrix(self) -> NDArray[np.float64]:
        """n_states x n_states Markov transition matrix (rows sum to 1)."""
        matrix = np.full((self.n_states, self.n_states), self.p_leave)
        np.fill_diagonal(matrix, self.p_stay)
        return matrix


def variance_grid(p: float) -> NDArray[np.float64]:
    """Five log-spaced variances from 1/p to p, endpoints included."""
    return np.logspace(-1.0, 1.0, N_GRID_POINTS, base=p)


@dataclass(frozen=True)
class SynthDataset:
    """A generated series together with its ground truth."""

    config: SynthConfig
    series: TimeSeries
    true_mixing: NDArray[np.float64]
    state_seq: NDArray[np.int64]
    state_covs: NDArray[np.float64]  # n_states x d_n x d_n, diagonal

    @property
    def epochs(self) -> Epoching:
        """The equal epoching the dataset was generated on."""
        length = self.config.epoch_len
        stop = length * self.config.n_epochs + 1
        return Epoching(edges=tuple(range(0, stop, length)))

    @property
    def truth(self) -> NDArray[np.bool_]:
        """One flag per epoch boundary, True where the state changes."""
        return self.state_seq[1:] != self.state_seq[:-1]

    @property
    def true_changepoints(self) -> list[int]:
        """Boundary indices k (between epochs k and k + 1) with a state change."""
        return np.flatnonzero(self.truth).tolist()

    def sidecar(self) -> dict[str, Any]:
        """JSON-compatible ground truth written next to the CSV."""
        return {
            "config": self.config.model_dump(mode="json"),
            "state_seq": self.state_seq.tolist(),
            "true_changepoints": self.true_changepoints,
            "true_mixing": array_to_json(self.true_mixing),
            "state_variances": [np.diag(c).tolist() for c in self.state_covs],
        }


def sample_state_covariances(
    config: SynthConfig, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Draw one diagonal covariance per Markov state.

    Each of the d_n diagonal entries is drawn uniformly, with replacement,
    from :func:`variance_grid`.

    Returns:
        Array of shape (n_states, d_n, d_n).
    """
    grid = variance_grid(config.p)
    picks = rng.integers(0, N_GRID_POINTS, size=(config.n_states, config.d_n))
    variances = grid[picks]
    covs = np.zeros((config.n_states, config.d_n, config.d_n))
    index = np.arange(config.d_n)
    covs[:, index, index] = variances
    return covs


def sample_state_sequence(
    config: SynthConfig, rng: np.random.Generator
) -> NDArray[np.int64]:
    """Run the Markov chain for ``n_epochs`` steps from a uniform start."""
    states = np.empty(config.n_epochs, dtype=np.int64)
    states[0] = rng.integers(config.n_states)
    for i in range(1, config.n_epochs):
        current = states[i - 1]
        if rng.random() < config.p_stay:
            states[i] = current
        else:
            # uniform over the other states
            offset = rng.integers(1, config.n_states)
            states[i] = (current + offset) % config.n_states
    return states


def random_projection(D: int, d: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """A d x D matrix with orthonormal rows from a QR-orthonormalized Gaussian.

    Raises:
        ConfigError: If d is not in 1..D.
    """
    if not 1 <= d <= D:
        msg = f"need 1 <= d <= D, got d={d}, D={D}"
        raise ConfigError(msg)
    q, r = np.linalg.qr(rng.standard_normal((D, d)))
    q *= np.sign(np.diag(r))
    return q.T


def _random_orthogonal(D: int, rng: np.random.Generator) -> NDArray[np.float64]:
    return random_projection(D, D, rng)


def sample_mixing(config: SynthConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    """Draw the D x D mixing matrix from the configured ensemble.

    Raises:
        NumericalError: If a conditioned draw exceeds the requested
            condition number.
    """
    D = config.D
    match config.mixing:
        case MixingKind.IDENTITY:
            return np.eye(D)
        case MixingKind.RANDOM_ORTHOGONAL:
            return _random_orthogonal(D, rng)
        case MixingKind.RANDOM_CONDITIONED:
            u = _random_orthogonal(D, rng)
            v = _random_orthogonal(D, rng)
            kappa = config.condition_number
            singular = np.exp(rng.uniform(-np.log(kappa), 0.0, size=D))
            singular[0] = 1.0
            mixing = (u * singular) @ v.T
            condition = np.linalg.cond(mixing)
            if condition > kappa * (1.0 + 1e-9):
                msg = f"mixing condition number {condition:.6g} exceeds {kappa}"
                raise NumericalError(msg)
            return mixing


def generate(config: SynthConfig) -> SynthDataset:
    """Generate a dataset x(t) = A s(t) with ground truth.

    Stationary sources are i.i.d. 𝒩(0, 1); the non-stationary sources of an
    epoch in state k are i.i.d. 𝒩(0, Σ_k). The stationary sources occupy the
    first d_s entries of s. Random draws happen in a fixed order (state
    covariances, state sequence, mixing, samples) from one generator seeded
    by ``config.seed``.

    Returns:
        The dataset.
    """
    rng = np.random.default_rng(config.seed)
    covs = sample_state_covariances(config, rng)
    states = sample_state_sequence(config, rng)
    mixing = sample_mixing(config, rng)
    n_samples = config.n_epochs * config.epoch_len
    stationary = rng.standard_normal((config.d_s, n_samples))
    scales = np.sqrt(np.diagonal(covs, axis1=1, axis2=2))  # n_states x d_n
    per_sample = np.repeat(scales[states], config.epoch_len, axis=0).T
    nonstationary = per_sample * rng.standard_normal((config.d_n, n_samples))
    sources = np.vstack([stationary, nonstationary])
    series = TimeSeries(mixing @ sources)
    dataset = SynthDataset(
        config=config,
        series=series,
        true_mixing=mixing,
        state_seq=states,
        state_covs=covs,
    )
    logger.info(
        "Generated D=%d (d_s=%d, d_n=%d) series of %d samples with %d change points",
        config.D,
        config.d_s,
        config.d_n,
        n_samples,
        len(dataset.true_changepoints),
    )
    return dataset
