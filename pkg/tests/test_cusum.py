"""Tests for the weighted CUSUM detector."""

import itertools
import math

import numpy as np
import pydantic
import pytest

from ssa_changepoint.cusum import (
    CusumConfig,
    cusum_detect,
    cusum_log_statistic,
    cusum_roc,
    cusum_scan,
    map_to_boundaries,
    threshold_grid,
)
from ssa_changepoint.errors import (
    ArityError,
    ConfigError,
    DivisionDegeneracyError,
    TooFewSamplesError,
)
from ssa_changepoint.report import DetectorKind
from ssa_changepoint.timeseries import TimeSeries


class TestCusumConfig:
    """Tests for CusumConfig and its variance grid."""

    def test_default_grid_scales_with_reference(self) -> None:
        """The grid runs from 0.2 θ₀ to 5 θ₀ in 25 equal steps."""
        thetas, spacing = CusumConfig().grid(2.0)
        assert thetas.size == 25
        assert thetas[0] == pytest.approx(0.4)
        assert thetas[-1] == pytest.approx(10.0)
        assert spacing == pytest.approx(0.4)

    def test_explicit_grid(self) -> None:
        """An explicit grid ignores θ₀."""
        thetas, spacing = CusumConfig(theta_grid=(1.0, 2.0, 3.0)).grid(100.0)
        np.testing.assert_array_equal(thetas, [1.0, 2.0, 3.0])
        assert spacing == 1.0

    def test_explicit_grid_must_be_positive(self) -> None:
        """Non-positive candidate variances are refused."""
        with pytest.raises(ConfigError):
            CusumConfig(theta_grid=(0.0, 1.0)).grid(1.0)

    def test_grid_bounds_ordered(self) -> None:
        """grid_high below grid_low is refused."""
        with pytest.raises(pydantic.ValidationError):
            CusumConfig(grid_low=3.0, grid_high=2.0)


class TestLogStatistic:
    """Tests for cusum_log_statistic."""

    def test_reference_only_grid_is_zero(self) -> None:
        """A grid holding only θ₀ with unit spacing gives ln Λ̃ = 0."""
        values = cusum_log_statistic([1.0, 50.0, 400.0], 20, 2.0, [2.0], 1.0)
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_two_point_grid_by_hand(self) -> None:
        """Closed form for a window of n samples with sum of squares s."""
        n, s, theta0 = 10, 30.0, 1.0
        thetas, spacing = np.array([2.0, 4.0]), 2.0
        terms = [
            -0.5 * n * math.log(t / theta0) - 0.5 * s * (1 / t - 1 / theta0)
            for t in thetas
        ]
        expected = math.log(sum(math.exp(v) for v in terms) / spacing)
        value = cusum_log_statistic(s, n, theta0, thetas, spacing)
        assert float(value) == pytest.approx(expected)


class TestScan:
    """Tests for cusum_scan."""

    def test_no_alarm_without_change(self, rng: np.random.Generator) -> None:
        """White noise of constant variance never reaches h = 20."""
        y = rng.standard_normal(20_000)
        alarms, statistic = cusum_scan(y, CusumConfig(window=200), 20.0)
        assert alarms == []
        assert np.all(np.isnan(statistic[:399]))
        assert np.all(np.isfinite(statistic[399:]))

    def test_alarm_follows_variance_step(self, step_series: TimeSeries) -> None:
        """The first alarm comes shortly after the step at t = 5000."""
        alarms, _ = cusum_scan(step_series.data[0], CusumConfig(window=100), 20.0)
        assert len(alarms) == 1
        assert 5000 <= alarms[0] < 5100

    def test_first_alarm_moves_later_with_threshold(
        self, rng: np.random.Generator
    ) -> None:
        """Before the first alarm the scan does not depend on h."""
        y = rng.standard_normal(6000) * np.repeat([1.0, 1.6, 0.7, 2.2], 1500)
        config = CusumConfig(window=100)
        _, reference = cusum_scan(y, config, np.inf)
        first = []
        for h in (1.0, 3.0, 10.0, 30.0, 100.0):
            alarms, statistic = cusum_scan(y, config, h)
            first.append(alarms[0] if alarms else y.size)
            evaluated = np.flatnonzero(np.isfinite(statistic))
            before = evaluated[evaluated <= first[-1]]
            np.testing.assert_array_equal(statistic[before], reference[before])
        assert first == sorted(first)

    def test_zero_reference_variance(self) -> None:
        """An all-zero reference window cannot be normalized."""
        with pytest.raises(DivisionDegeneracyError):
            cusum_scan(np.zeros(40), CusumConfig(window=10), 5.0)


class TestMapToBoundaries:
    """Tests for map_to_boundaries."""

    def test_nearest(self) -> None:
        """Each time goes to the closest boundary."""
        mapped = map_to_boundaries([90, 260, 999], [100, 200, 300])
        np.testing.assert_array_equal(mapped, [0, 2, 2])

    def test_after(self) -> None:
        """Each time goes to the first boundary at or after it."""
        mapped = map_to_boundaries([90, 200, 301], [100, 200, 300], "after")
        np.testing.assert_array_equal(mapped, [0, 1, -1])


class TestCusumDetect:
    """Tests for cusum_detect and cusum_roc."""

    def test_flags_the_step_boundary(self, step_series: TimeSeries) -> None:
        """The step at sample 5000 is boundary 9 of twenty epochs."""
        config = CusumConfig(n_epochs=20, window=100, threshold=20.0)
        report = cusum_detect(step_series, config)
        assert report.detector is DetectorKind.CUSUM
        assert report.tau == 20.0
        assert report.changepoints == [9]
        assert report.n_boundaries == 19
        assert np.all(np.isfinite(report.scores))
        assert int(np.argmax(report.scores)) == 9
        assert report.metadata["window"] == 100

    def test_flags_shrink_as_threshold_grows(self, step_series: TimeSeries) -> None:
        """Boundaries flagged at a higher h were flagged at every lower h."""
        config = CusumConfig(n_epochs=20, window=100)
        flag_sets = [
            cusum_detect(step_series, config, threshold=h).epoch_boundaries
            for h in (20.0, 40.0, 80.0, 150.0, 1e4)
        ]
        for lower, higher in itertools.pairwise(flag_sets):
            assert not np.any(higher & ~lower)
        assert flag_sets[0].any()
        assert not flag_sets[-1].any()

    def test_threshold_override(self, step_series: TimeSeries) -> None:
        """An unreachable threshold silences the detector."""
        config = CusumConfig(n_epochs=20, window=100)
        report = cusum_detect(step_series, config, threshold=1e6)
        assert report.tau == 1e6
        assert report.changepoints == []

    def test_rejects_multichannel_input(self, gaussian_series: TimeSeries) -> None:
        """CUSUM only accepts one channel."""
        with pytest.raises(ArityError):
            cusum_detect(gaussian_series, CusumConfig(n_epochs=4, window=10))

    def test_rejects_short_series(self) -> None:
        """The series must hold a reference and a monitoring window."""
        with pytest.raises(TooFewSamplesError):
            cusum_detect(TimeSeries(np.ones(50)), CusumConfig(n_epochs=2, window=30))

    def test_roc_of_the_step(self, step_series: TimeSeries) -> None:
        """Sweeping h separates the step boundary from the rest."""
        truth = np.zeros(19, dtype=bool)
        truth[9] = True
        config = CusumConfig(n_epochs=20, window=100)
        curve = cusum_roc(step_series, config, truth)
        assert curve.auc > 0.9
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_threshold_grid(self) -> None:
        """The sweep is log-spaced from 1e-2 past the largest statistic."""
        grid = threshold_grid(np.array([np.nan, 3.0, 50.0]))
        assert grid.size == 32
        assert grid[0] == pytest.approx(1e-2)
        assert grid[-1] == pytest.approx(50.5)
