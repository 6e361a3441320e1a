"""Tests for model-order selection."""

import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from ssa_changepoint.errors import (
    ConfigError,
    SingularCovarianceError,
    ValidationError,
)
from ssa_changepoint.order import (
    BniseReport,
    HoldoutResult,
    OrderCandidate,
    OrderSelection,
    StationarityTest,
    bnise,
    chi2_cdf,
    chi2_sf,
    gaussian_log_likelihood,
    holdout_stationarity_check,
    largest_accepted,
    likelihood_ratio_statistic,
    normalize_stats,
    select_order,
)
from ssa_changepoint.ssa import SsaConfig, ssa_objective
from ssa_changepoint.synth import (
    SynthConfig,
    SynthDataset,
    generate,
    random_projection,
)
from ssa_changepoint.timeseries import (
    EpochStats,
    TimeSeries,
    epoch_stats,
    make_epochs,
    transform_stats,
)
from tests.helpers import random_stats, standard_stats


@pytest.fixture
def switching_dataset() -> SynthDataset:
    """D=4 dataset whose states change often enough to show in either half."""
    return generate(
        SynthConfig(
            D=4, d_s=2, d_n=2, n_epochs=20, epoch_len=300, p=4.0, p_stay=0.5, seed=11
        )
    )


class TestChiSquared:
    """Tests for chi2_cdf and chi2_sf."""

    @pytest.mark.parametrize(("x", "dof"), [(0.5, 1), (3.0, 2), (40.0, 25), (7.5, 9)])
    def test_matches_scipy(self, x: float, dof: int) -> None:
        """The incomplete-gamma form agrees with scipy's distribution."""
        assert chi2_cdf(x, dof) == pytest.approx(scipy_stats.chi2.cdf(x, dof))
        assert chi2_sf(x, dof) == pytest.approx(scipy_stats.chi2.sf(x, dof))

    def test_zero_has_full_upper_tail(self) -> None:
        """P(χ² >= 0) = 1."""
        assert chi2_sf(0.0, 5) == 1.0

    def test_rejects_negative_argument(self) -> None:
        """The CDF is undefined for negative x."""
        with pytest.raises(ValidationError):
            chi2_cdf(-1.0, 3)

    def test_rejects_non_positive_dof(self) -> None:
        """Degrees of freedom must be positive."""
        with pytest.raises(ValidationError):
            chi2_cdf(1.0, 0)


class TestLikelihoodRatio:
    """Tests for likelihood_ratio_statistic."""

    def test_standard_epochs_give_zero(self) -> None:
        """Epochs that are exactly 𝒩(0, I) in the ML sense have Λ = 0."""
        test = likelihood_ratio_statistic(standard_stats(5, 2), renormalize=False)
        assert test.statistic == pytest.approx(0.0, abs=1e-9)
        assert test.dof == 25.0
        assert test.p_value == pytest.approx(1.0)
        assert not test.rejects(0.01)

    def test_univariate_by_hand(self) -> None:
        """One epoch with ML variance 2 and mean 0.5."""
        stats = EpochStats(
            means=np.array([[0.5]]),
            covariances=np.array([[[2.0 * 10 / 9]]]),
            counts=np.array([10]),
        )
        test = likelihood_ratio_statistic(stats, 1, renormalize=False)
        expected = 10.0 * (2.0 + 0.25 - math.log(2.0) - 1.0)
        assert test.statistic == pytest.approx(expected)
        assert test.dof == 2.0
        # for two degrees of freedom the tail is exp(-x/2)
        assert test.p_value == pytest.approx(math.exp(-expected / 2))

    def test_closed_form_offset(self, rng: np.random.Generator) -> None:
        """The full and simplified forms differ by -d Σ Nᵢ."""
        test = likelihood_ratio_statistic(random_stats(rng, 4, 3))
        assert test.closed_form_offset == pytest.approx(-3 * 4 * 50)

    def test_matches_sample_log_likelihoods(self, rng: np.random.Generator) -> None:
        """Two 1-D epochs with variances 2 and 1/2, evaluated sample by sample."""
        epochs = [rng.normal(0.0, math.sqrt(v), 400) for v in (2.0, 0.5)]
        series = TimeSeries(np.concatenate(epochs))
        stats = epoch_stats(series, make_epochs(series, 2))
        expected = 0.0
        for x in epochs:
            fitted = scipy_stats.norm.logpdf(x, x.mean(), x.std()).sum()
            expected += 2.0 * (fitted - scipy_stats.norm.logpdf(x).sum())
        test = likelihood_ratio_statistic(stats, 1, renormalize=False)
        assert test.statistic == pytest.approx(expected, rel=1e-9)

    def test_ranks_projections_like_the_objective(
        self, whitened_stats: EpochStats, rng: np.random.Generator
    ) -> None:
        """On equal-size epochs Λ orders projections exactly as the objective."""
        projections = [random_projection(4, 2, rng) for _ in range(50)]
        objectives = [ssa_objective(whitened_stats, b) for b in projections]
        statistics = [
            likelihood_ratio_statistic(
                transform_stats(whitened_stats, b), 2, renormalize=False
            ).statistic
            for b in projections
        ]
        np.testing.assert_array_equal(np.argsort(objectives), np.argsort(statistics))


class TestGaussianLogLikelihood:
    """Tests for gaussian_log_likelihood."""

    def test_matches_scipy(self, rng: np.random.Generator) -> None:
        """Per-epoch sums of multivariate normal log densities."""
        samples = rng.standard_normal((3, 2, 150)) * np.array([[1.0], [2.0]])
        series = TimeSeries(np.concatenate(list(samples), axis=1))
        stats = epoch_stats(series, make_epochs(series, 3))
        model = random_stats(rng, 3, 2)
        values = gaussian_log_likelihood(stats, model.means, model.covariances)
        for i, block in enumerate(samples):
            expected = scipy_stats.multivariate_normal.logpdf(
                block.T, model.means[i], model.covariances[i]
            ).sum()
            assert values[i] == pytest.approx(expected, rel=1e-9)

    def test_singular_model(self) -> None:
        """A model covariance without a Cholesky factor is refused."""
        stats = standard_stats(2, 2)
        covs = np.stack([np.eye(2), np.zeros((2, 2))])
        with pytest.raises(SingularCovarianceError) as info:
            gaussian_log_likelihood(stats, np.zeros((2, 2)), covs)
        assert info.value.epoch == 1

    def test_switching_means_are_rejected(self) -> None:
        """Means alternating between ±3 are far from stationary."""
        means = np.array([[3.0], [-3.0]] * 5)
        stats = EpochStats(means, np.ones((10, 1, 1)), np.full(10, 100))
        test = likelihood_ratio_statistic(stats)
        assert test.rejects(0.01)
        assert test.p_value < 1e-10

    def test_renormalizes_unwhitened_stats(self, rng: np.random.Generator) -> None:
        """Raw stats are re-whitened before the statistic is formed."""
        raw = random_stats(rng, 6, 2)
        direct = likelihood_ratio_statistic(raw)
        explicit = likelihood_ratio_statistic(normalize_stats(raw), renormalize=False)
        assert direct.statistic == pytest.approx(explicit.statistic)

    def test_dimension_mismatch(self) -> None:
        """The expected dimension is checked."""
        with pytest.raises(ValidationError):
            likelihood_ratio_statistic(standard_stats(3, 2), 3)

    def test_singular_epoch(self) -> None:
        """A zero covariance cannot be tested."""
        covs = np.stack([np.eye(2), np.zeros((2, 2))])
        stats = EpochStats(np.zeros((2, 2)), covs, np.array([10, 10]))
        with pytest.raises(SingularCovarianceError):
            likelihood_ratio_statistic(stats, renormalize=False)


class TestSelectOrder:
    """Tests for select_order and largest_accepted."""

    def test_largest_accepted(self) -> None:
        """The largest non-rejecting candidate wins; 0 when all reject."""
        def candidate(d: int, *, rejected: bool) -> OrderCandidate:
            return OrderCandidate(d_s=d, test=None, rejected=rejected)

        mixed = [
            candidate(1, rejected=False),
            candidate(2, rejected=True),
            candidate(3, rejected=False),
        ]
        assert largest_accepted(mixed) == 3
        assert largest_accepted([candidate(1, rejected=True)]) == 0

    def test_recovers_true_dimension(self, whitened_stats: EpochStats) -> None:
        """Two stationary sources in four channels give d_s = 2."""
        selection = select_order(whitened_stats, SsaConfig(d_s=1, n_restarts=3))
        assert [c.d_s for c in selection.candidates] == [1, 2, 3]
        assert selection.chosen_d_s == 2
        assert selection.candidates[2].rejected

    def test_frame_and_dict(self, whitened_stats: EpochStats) -> None:
        """The tabular form has one row per candidate."""
        selection = select_order(whitened_stats, SsaConfig(d_s=1, n_restarts=2))
        frame = selection.to_frame()
        assert list(frame.columns) == ["d_s", "statistic", "dof", "p_value", "decision"]
        assert set(frame["decision"]) <= {"accept", "reject"}
        payload = selection.to_dict()
        assert payload["chosen_d_s"] == selection.chosen_d_s
        assert len(payload["candidates"]) == 3

    def test_failed_candidate_counts_as_rejection(self) -> None:
        """A candidate without a test is shown as rejected with NaN values."""
        selection = OrderSelection(
            alpha=0.01,
            candidates=[
                OrderCandidate(
                    d_s=1,
                    test=StationarityTest(1.0, 2.0, 0.6, 1),
                    rejected=False,
                ),
                OrderCandidate(d_s=2, test=None, rejected=True, error="boom"),
            ],
            chosen_d_s=1,
        )
        frame = selection.to_frame()
        assert frame.loc[1, "decision"] == "reject"
        assert np.isnan(frame.loc[1, "p_value"])

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
    def test_rejects_bad_alpha(self, whitened_stats: EpochStats, alpha: float) -> None:
        """The significance level must lie strictly between 0 and 1."""
        with pytest.raises(ConfigError):
            select_order(whitened_stats, SsaConfig(d_s=1), alpha)


class TestHoldout:
    """Tests for holdout_stationarity_check and bnise."""

    def test_z_score(self) -> None:
        """Excess loss in units of the permutation spread; NaN without spread."""
        assert HoldoutResult(1, 5.0, 3.0, 0.5).z_score == pytest.approx(4.0)
        assert math.isnan(HoldoutResult(1, 5.0, 3.0, 0.0).z_score)

    def test_one_result_per_candidate(self, switching_dataset: SynthDataset) -> None:
        """Results follow the candidate order and carry every permuted loss."""
        results = holdout_stationarity_check(
            switching_dataset.series,
            [2, 1],
            n_epochs=10,
            n_permutations=4,
            seed=3,
            config=SsaConfig(d_s=1, n_restarts=2),
        )
        assert [r.d_s for r in results] == [2, 1]
        assert all(len(r.permuted_losses) == 4 for r in results)
        assert all(r.permuted_std > 0 for r in results)

    def test_needs_a_permutation(self, switching_dataset: SynthDataset) -> None:
        """At least one permuted copy is required."""
        with pytest.raises(ConfigError):
            holdout_stationarity_check(
                switching_dataset.series, [1], 10, 0, 0, SsaConfig(d_s=1)
            )

    def test_bnise_jumps_past_true_dimension(
        self, switching_dataset: SynthDataset
    ) -> None:
        """Including a switching source makes the excess loss explode."""
        report = bnise(
            switching_dataset.series,
            up_to_d=4,
            n_epochs=10,
            n_permutations=5,
            seed=3,
            config=SsaConfig(d_s=1, n_restarts=2),
        )
        assert report.per_d[0] == 0.0
        assert len(report.per_d) == 4
        z = [h.z_score for h in report.holdout]
        np.testing.assert_allclose(report.per_d[1:], np.cumsum(z))
        assert z[2] > 3.0
        assert z[2] > abs(z[0]) + abs(z[1])
        assert report.undefined == []

    def test_bnise_range(self, switching_dataset: SynthDataset) -> None:
        """up_to_d must lie in 1..D."""
        with pytest.raises(ConfigError):
            bnise(switching_dataset.series, 5, 10, 5, 0, SsaConfig(d_s=1))

    def test_report_serialization(self) -> None:
        """Undefined values become null; the frame has one row per d."""
        report = BniseReport(
            per_d=[0.0, 1.5, math.nan],
            n_permutations=3,
            seed=1,
            holdout=[HoldoutResult(1, 2.0, 0.5, 1.0), HoldoutResult(2, 1.0, 1.0, 0.0)],
            undefined=[2],
        )
        payload = report.to_dict()
        assert payload["per_d"] == [0.0, 1.5, None]
        frame = report.to_frame()
        assert list(frame["d"]) == [1, 2, 3]
        assert frame.loc[0, "loss"] == 2.0
        assert frame.loc[1, "loss"] == 1.0
        assert np.isnan(frame.loc[2, "loss"])
