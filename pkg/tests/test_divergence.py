"""Tests for the divergence module."""

import numpy as np
import pytest

from ssa_changepoint.divergence import (
    kl_gauss,
    kl_gauss_symmetrized,
    kl_gauss_to_standard,
    pairwise_symmetrized_kl,
)
from ssa_changepoint.errors import NotPositiveDefiniteError
from tests.helpers import random_stats


class TestKlToStandard:
    """Tests for kl_gauss_to_standard."""

    def test_standard_normal_is_zero(self) -> None:
        """KL of 𝒩(0, I) to itself is zero."""
        assert kl_gauss_to_standard(np.zeros(3), np.eye(3)) == pytest.approx(0.0)

    def test_kl_to_standard_d1(self) -> None:
        """One-dimensional closed form ½(σ² + μ² - 1 - log σ²)."""
        expected = 0.5 * (4.0 + 1.0 - 1.0 - np.log(4.0))
        assert kl_gauss_to_standard([1.0], [[4.0]]) == pytest.approx(expected)

    def test_agrees_with_general_form(self, rng: np.random.Generator) -> None:
        """The special case matches kl_gauss against 𝒩(0, I)."""
        stats = random_stats(rng, 1, 3)
        mean, cov = stats.means[0], stats.covariances[0]
        assert kl_gauss_to_standard(mean, cov) == pytest.approx(
            kl_gauss(mean, cov, np.zeros(3), np.eye(3))
        )

    def test_rejects_indefinite_covariance(self) -> None:
        """A covariance without Cholesky factor should be refused."""
        with pytest.raises(NotPositiveDefiniteError):
            kl_gauss_to_standard(np.zeros(2), np.diag([1.0, -1.0]))


class TestKlGauss:
    """Tests for kl_gauss and kl_gauss_symmetrized."""

    def test_univariate_closed_form(self) -> None:
        """KL between two 1-D Gaussians."""
        # KL(𝒩(0, 1) ‖ 𝒩(1, 2)) = ½(1/2 + 1/2 - 1 + log 2)
        expected = 0.5 * (0.5 + 0.5 - 1.0 + np.log(2.0))
        assert kl_gauss([0.0], [[1.0]], [1.0], [[2.0]]) == pytest.approx(expected)

    def test_identical_gaussians(self, rng: np.random.Generator) -> None:
        """KL of a Gaussian to itself is zero."""
        stats = random_stats(rng, 1, 2)
        mean, cov = stats.means[0], stats.covariances[0]
        assert kl_gauss(mean, cov, mean, cov) == pytest.approx(0.0, abs=1e-12)

    def test_symmetrized_is_average(self, rng: np.random.Generator) -> None:
        """The symmetrized divergence is the mean of both directions."""
        stats = random_stats(rng, 2, 3)
        a = (stats.means[0], stats.covariances[0])
        b = (stats.means[1], stats.covariances[1])
        expected = 0.5 * kl_gauss(*a, *b) + 0.5 * kl_gauss(*b, *a)
        assert kl_gauss_symmetrized(*a, *b) == pytest.approx(expected)
        assert kl_gauss_symmetrized(*b, *a) == kl_gauss_symmetrized(*a, *b)


class TestPairwiseSymmetrizedKl:
    """Tests for pairwise_symmetrized_kl."""

    def test_matches_pairwise_calls(self, rng: np.random.Generator) -> None:
        """Every entry equals the scalar symmetrized divergence."""
        stats = random_stats(rng, 4, 3)
        precisions = np.linalg.inv(stats.covariances)
        matrix = pairwise_symmetrized_kl(stats.means, stats.covariances, precisions)
        assert matrix.shape == (4, 4)
        np.testing.assert_allclose(np.diag(matrix), 0.0)
        np.testing.assert_allclose(matrix, matrix.T)
        expected = kl_gauss_symmetrized(
            stats.means[1], stats.covariances[1], stats.means[3], stats.covariances[3]
        )
        assert matrix[1, 3] == pytest.approx(expected)
