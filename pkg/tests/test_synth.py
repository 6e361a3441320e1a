"""Tests for the synthetic benchmark generator."""

import numpy as np
import pydantic
import pytest

from ssa_changepoint.errors import ConfigError
from ssa_changepoint.synth import (
    MixingKind,
    SynthConfig,
    SynthDataset,
    generate,
    random_projection,
    sample_mixing,
    variance_grid,
)


class TestSynthConfig:
    """Tests for SynthConfig and its Markov chain."""

    def test_dimensions_must_add_up(self) -> None:
        """d_s + d_n has to equal D."""
        with pytest.raises(pydantic.ValidationError, match="must equal D"):
            SynthConfig(D=4, d_s=2, d_n=1)

    def test_transition_matrix(self) -> None:
        """Rows sum to one with p_stay on the diagonal."""
        config = SynthConfig(D=2, d_s=1, d_n=1, n_states=4, p_stay=0.7)
        matrix = config.transition_matrix()
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
        np.testing.assert_allclose(np.diag(matrix), 0.7)
        assert matrix[0, 1] == pytest.approx(0.1)

    def test_variance_grid(self) -> None:
        """Five log-spaced values from 1/p to p."""
        np.testing.assert_allclose(variance_grid(4.0), [0.25, 0.5, 1.0, 2.0, 4.0])


class TestGenerate:
    """Tests for generate and SynthDataset."""

    def test_shapes(self, small_dataset: SynthDataset) -> None:
        """One column per sample and one state per epoch."""
        assert small_dataset.series.data.shape == (4, 30 * 200)
        assert small_dataset.state_seq.shape == (30,)
        assert small_dataset.state_covs.shape == (5, 2, 2)
        assert small_dataset.epochs.n_epochs == 30

    def test_same_seed_same_data(self, small_dataset: SynthDataset) -> None:
        """Generation is a pure function of the config."""
        again = generate(small_dataset.config)
        np.testing.assert_array_equal(again.series.data, small_dataset.series.data)
        np.testing.assert_array_equal(again.state_seq, small_dataset.state_seq)

    def test_other_seed_other_data(self, small_dataset: SynthDataset) -> None:
        """A different seed draws different samples."""
        other = generate(small_dataset.config.model_copy(update={"seed": 8}))
        assert not np.array_equal(other.series.data, small_dataset.series.data)

    def test_state_variances_come_from_grid(self, small_dataset: SynthDataset) -> None:
        """Every state variance is a grid point and off-diagonals are zero."""
        grid = variance_grid(4.0)
        for cov in small_dataset.state_covs:
            assert all(np.isclose(grid, v).any() for v in np.diag(cov))
            np.testing.assert_array_equal(cov - np.diag(np.diag(cov)), 0.0)

    def test_truth_marks_state_changes(self, small_dataset: SynthDataset) -> None:
        """Boundary k is flagged exactly when states k and k + 1 differ."""
        states = small_dataset.state_seq
        expected = [k for k in range(29) if states[k] != states[k + 1]]
        assert small_dataset.true_changepoints == expected

    def test_sticky_chain_never_changes(self) -> None:
        """With p_stay = 1 there are no change points."""
        config = SynthConfig(D=2, d_s=1, d_n=1, n_epochs=10, epoch_len=5, p_stay=1.0)
        assert generate(config).true_changepoints == []

    def test_identity_mixing_exposes_sources(self) -> None:
        """Without mixing the epoch variances match the state variances."""
        config = SynthConfig(
            D=2,
            d_s=1,
            d_n=1,
            n_epochs=6,
            epoch_len=4000,
            p=4.0,
            mixing=MixingKind.IDENTITY,
            seed=2,
        )
        dataset = generate(config)
        epochs = dataset.series.data.reshape(2, 6, 4000)
        expected = dataset.state_covs[dataset.state_seq, 0, 0]
        np.testing.assert_allclose(epochs[1].var(axis=1), expected, rtol=0.15)
        np.testing.assert_allclose(epochs[0].var(axis=1), 1.0, rtol=0.15)

    def test_sidecar(self, small_dataset: SynthDataset) -> None:
        """The sidecar carries the config and the ground truth."""
        sidecar = small_dataset.sidecar()
        assert sidecar["config"]["D"] == 4
        assert sidecar["true_changepoints"] == small_dataset.true_changepoints
        assert len(sidecar["state_variances"]) == 5


class TestMixing:
    """Tests for random_projection and sample_mixing."""

    def test_projection_rows_are_orthonormal(self, rng: np.random.Generator) -> None:
        """P P^T is the identity."""
        projection = random_projection(5, 2, rng)
        assert projection.shape == (2, 5)
        np.testing.assert_allclose(projection @ projection.T, np.eye(2), atol=1e-12)

    def test_projection_dimension(self, rng: np.random.Generator) -> None:
        """d must lie in 1..D."""
        with pytest.raises(ConfigError):
            random_projection(3, 4, rng)

    def test_conditioned_mixing(self, rng: np.random.Generator) -> None:
        """The condition number stays within the requested bound."""
        config = SynthConfig(
            D=5,
            d_s=3,
            d_n=2,
            mixing=MixingKind.RANDOM_CONDITIONED,
            condition_number=20.0,
        )
        mixing = sample_mixing(config, rng)
        assert np.linalg.cond(mixing) <= 20.0 * (1 + 1e-9)

    def test_orthogonal_mixing(self, rng: np.random.Generator) -> None:
        """The default ensemble is orthogonal."""
        config = SynthConfig(D=3, d_s=2, d_n=1)
        mixing = sample_mixing(config, rng)
        np.testing.assert_allclose(mixing.T @ mixing, np.eye(3), atol=1e-12)
