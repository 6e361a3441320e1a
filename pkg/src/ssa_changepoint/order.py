"""Likelihood-ratio stationarity test and choice of the stationary dimension."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
from scipy import special

from ssa_changepoint.errors import (
    ConfigError,
    DivisionDegeneracyError,
    SingularCovarianceError,
    SsaCpdError,
    ValidationError,
)
from ssa_changepoint.ssa import SsaConfig, fit_s_projection, ssa_objective
from ssa_changepoint.timeseries import (
    EpochStats,
    epoch_stats,
    fit_whitening,
    make_epochs,
    transform_stats,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from ssa_changepoint.timeseries import TimeSeries

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-6
DEFAULT_ALPHA = 0.01


def chi2_cdf(x: float, dof: float) -> float:
    """Regularized lower incomplete gamma P(dof/2, x/2).

    Raises:
        ValidationError: If ``x`` is negative or ``dof`` is not positive.
    """
    if x < 0 or dof <= 0:
        msg = f"chi2_cdf needs x >= 0 and dof > 0, got x={x}, dof={dof}"
        raise ValidationError(msg)
    return float(special.gammainc(0.5 * dof, 0.5 * x))


def chi2_sf(x: float, dof: float) -> float:
    """Upper tail 1 - chi2_cdf(x, dof), clamped to [0, 1]."""
    return min(max(float(special.gammaincc(0.5 * dof, 0.5 * max(x, 0.0))), 0.0), 1.0)


@dataclass(frozen=True)
class StationarityTest:
    """Likelihood-ratio test of 'every epoch is 𝒩(0, I)'."""

    statistic: float
    dof: float
    p_value: float
    dim: int
    closed_form_offset: float = 0.0

    def rejects(self, alpha: float) -> bool:
        """True when stationarity is rejected at level ``alpha``."""
        return self.p_value < alpha


def _is_normalized(stats: EpochStats) -> bool:
    mean_error = np.max(np.abs(stats.average_mean()))
    cov_error = np.max(np.abs(stats.average_covariance() - np.eye(stats.dim)))
    tolerance = NORMALIZATION_TOLERANCE
    return bool(mean_error < tolerance and cov_error < tolerance)


def normalize_stats(stats: EpochStats) -> EpochStats:
    """Re-whiten stats whose average epoch is not (0, I)."""
    if _is_normalized(stats):
        return stats
    return fit_whitening(stats).apply_stats(stats)


def gaussian_log_likelihood(
    stats: EpochStats,
    means: NDArray[np.float64],
    covariances: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Log-likelihood of each epoch's samples under 𝒩(means[i], covariances[i]).

    Evaluated from the sufficient statistics: with sample mean μᵢ and ML
    covariance Σᵢ, the Nᵢ samples of epoch i have log-likelihood
    -Nᵢ/2 [d log 2π + log det Sᵢ + tr(Sᵢ⁻¹ (Σᵢ + (μᵢ - mᵢ)(μᵢ - mᵢ)ᵀ))].

    Raises:
        SingularCovarianceError: If a model covariance is not positive definite.
    """
    d = stats.dim
    shift = stats.means - means
    scatter = stats.ml_covariances() + shift[:, :, np.newaxis] * shift[:, np.newaxis]
    try:
        factors = np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError:
        eigenvalues = np.linalg.eigvalsh(covariances)
        epoch = int(np.flatnonzero(eigenvalues.min(axis=1) <= 0)[0])
        raise SingularCovarianceError(epoch, "not positive definite") from None
    logdets = 2.0 * np.log(np.diagonal(factors, axis1=1, axis2=2)).sum(axis=1)
    quadratic = np.trace(np.linalg.solve(covariances, scatter), axis1=1, axis2=2)
    counts = stats.counts.astype(np.float64)
    return -0.5 * counts * (d * math.log(2.0 * math.pi) + logdets + quadratic)


def likelihood_ratio_statistic(
    stats: EpochStats, dim: int | None = None, *, renormalize: bool = True
) -> StationarityTest:
    """Λ = -2 log [L(H₀: all epochs 𝒩(0, I)) / L(H_A: epoch-wise 𝒩(μᵢ, Σᵢ))].

    Both likelihoods are summed from per-epoch Gaussian log-likelihoods at
    maximum-likelihood parameters (Σᵢ with divisor Nᵢ). The closed form
    ½ Σᵢ Nᵢ (-log det Σᵢ + ‖μᵢ‖² + tr Σᵢ) is cross-checked against Λ; the
    two differ by a factor of two and the constant -d Σᵢ Nᵢ, and a WARNING is
    logged when they do not.

    Args:
        stats: Projected epoch statistics of the tested sources.
        dim: Expected dimension d (checked against ``stats``).
        renormalize: Re-whiten within the projected space when the average
            epoch is not (0, I) to within 1e-6.

    Returns:
        The test with dof = ½ n d (d + 3) for n epochs.

    Raises:
        SingularCovarianceError: If an epoch covariance is singular.
    """
    d = stats.dim
    if dim is not None and dim != d:
        msg = f"expected dimension {dim}, stats have dimension {d}"
        raise ValidationError(msg)
    if renormalize and not _is_normalized(stats):
        logger.info("Re-whitening %d-dimensional stats before the test", d)
        stats = normalize_stats(stats)
    ml = stats.ml_covariances()
    signs, logdets = np.linalg.slogdet(ml)
    if np.any(signs <= 0):
        raise SingularCovarianceError(int(np.flatnonzero(signs <= 0)[0]))
    null = gaussian_log_likelihood(
        stats, np.zeros_like(stats.means), np.broadcast_to(np.eye(d), ml.shape)
    )
    alternative = gaussian_log_likelihood(stats, stats.means, ml)
    statistic = -2.0 * float(np.sum(null) - np.sum(alternative))
    counts = stats.counts.astype(np.float64)
    traces = np.trace(ml, axis1=1, axis2=2)
    norms = np.sum(stats.means**2, axis=1)
    simplified = 0.5 * float(np.sum(counts * (-logdets + norms + traces)))
    offset = statistic - 2.0 * simplified
    expected = -d * float(np.sum(counts))
    tolerance = 1e-6 * abs(statistic) + 1e-9
    if not math.isclose(offset, expected, rel_tol=1e-9, abs_tol=tolerance):
        logger.warning(
            "Closed-form statistic disagrees: offset %g vs %g", offset, expected
        )
    dof = 0.5 * stats.n_epochs * d * (d + 3)
    return StationarityTest(
        statistic=statistic,
        dof=dof,
        p_value=chi2_sf(statistic, dof),
        dim=d,
        closed_form_offset=offset,
    )


@dataclass(frozen=True)
class OrderCandidate:
    """Test outcome for one candidate stationary dimension."""

    d_s: int
    test: StationarityTest | None
    rejected: bool
    error: str | None = None


@dataclass(frozen=True)
class OrderSelection:
    """Per-candidate tests and the chosen stationary dimension."""

    alpha: float
    candidates: list[OrderCandidate]
    chosen_d_s: int

    def to_frame(self) -> pd.DataFrame:
        """Table with columns d_s, statistic, dof, p_value, decision."""
        rows = [
            {
                "d_s": c.d_s,
                "statistic": c.test.statistic if c.test else np.nan,
                "dof": c.test.dof if c.test else np.nan,
                "p_value": c.test.p_value if c.test else np.nan,
                "decision": "reject" if c.rejected else "accept",
            }
            for c in self.candidates
        ]
        columns = ["d_s", "statistic", "dof", "p_value", "decision"]
        return pd.DataFrame(rows, columns=columns)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict."""
        return {
            "alpha": self.alpha,
            "chosen_d_s": self.chosen_d_s,
            "candidates": [
                {
                    "d_s": c.d_s,
                    "statistic": c.test.statistic if c.test else None,
                    "dof": c.test.dof if c.test else None,
                    "p_value": c.test.p_value if c.test else None,
                    "rejected": c.rejected,
                    "error": c.error,
                }
                for c in self.candidates
            ],
        }


def largest_accepted(candidates: Sequence[OrderCandidate]) -> int:
    """Largest candidate d_s whose test does not reject, or 0."""
    accepted = [c.d_s for c in candidates if not c.rejected]
    return max(accepted, default=0)


def _test_candidate(
    stats: EpochStats, config: SsaConfig, d_s: int, alpha: float
) -> OrderCandidate:
    candidate_config = config.model_copy(update={"d_s": d_s, "d_n": None, "jobs": 1})
    try:
        fit = fit_s_projection(stats, candidate_config)
        test = likelihood_ratio_statistic(transform_stats(stats, fit.projection), d_s)
    except SsaCpdError as exc:
        logger.warning("Candidate d_s=%d failed: %s", d_s, exc)
        return OrderCandidate(d_s=d_s, test=None, rejected=True, error=str(exc))
    return OrderCandidate(d_s=d_s, test=test, rejected=test.rejects(alpha))


def select_order(
    stats: EpochStats, config: SsaConfig, alpha: float = DEFAULT_ALPHA
) -> OrderSelection:
    """Choose d_s as the largest candidate whose s-sources pass the test.

    For every d_s' in 1..D-1 the s-projection is fitted and the stationarity
    test is evaluated on the estimated s-sources. A candidate whose fit fails
    counts as rejecting. When every candidate rejects, 0 is returned.

    Args:
        stats: Whitened epoch statistics.
        config: Optimizer settings (its dimensions are overridden).
        alpha: Significance level, 0 < alpha < 1.

    Returns:
        The selection with one entry per candidate.
    """
    if not 0 < alpha < 1:
        msg = f"alpha must lie in (0, 1), got {alpha}"
        raise ConfigError(msg)
    dims = range(1, stats.dim)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            candidates = list(
                pool.map(lambda d: _test_candidate(stats, config, d, alpha), dims)
            )
    else:
        candidates = [_test_candidate(stats, config, d, alpha) for d in dims]
    chosen = largest_accepted(candidates)
    logger.info("Selected d_s=%d at alpha=%g", chosen, alpha)
    return OrderSelection(alpha=alpha, candidates=candidates, chosen_d_s=chosen)


@dataclass(frozen=True)
class HoldoutResult:
    """Hold-out loss of one candidate against its permutation baseline."""

    d_s: int
    loss: float
    permuted_mean: float
    permuted_std: float
    permuted_losses: tuple[float, ...] = field(default=())

    @property
    def z_score(self) -> float:
        """Standardized excess loss; NaN when the baseline has no spread."""
        if self.permuted_std <= 0:
            return math.nan
        return (self.loss - self.permuted_mean) / self.permuted_std


def _holdout_loss(stats: EpochStats, projection: NDArray[np.float64]) -> float:
    projected = normalize_stats(transform_stats(stats, projection))
    return ssa_objective(projected, np.eye(projected.dim))


def holdout_stationarity_check(  # noqa: PLR0913
    series: TimeSeries,
    candidates: Sequence[int],
    n_epochs: int,
    n_permutations: int,
    seed: int,
    config: SsaConfig,
) -> list[HoldoutResult]:
    """Compare the hold-out SSA loss with its time-permutation baseline.

    SSA is fitted on the first half of the series. The loss of each fitted
    s-projection is evaluated on the second half (re-whitened within the
    projected space) and on ``n_permutations`` copies of the second half with
    a uniformly permuted time axis. Permutations are drawn once per call and
    shared by all candidates.

    Args:
        series: Raw observed series.
        candidates: Candidate stationary dimensions.
        n_epochs: Number of epochs in each half.
        n_permutations: Number of permuted copies (at least 1).
        seed: Seed of the permutation stream.
        config: Optimizer settings (its dimensions are overridden).

    Returns:
        One result per candidate, in the order given.
    """
    if n_permutations < 1:
        msg = f"n_permutations must be >= 1, got {n_permutations}"
        raise ConfigError(msg)
    half = series.n_samples // 2
    first = series.slice_time(0, half)
    second = series.slice_time(half, series.n_samples)
    first_raw = epoch_stats(first, make_epochs(first, n_epochs))
    whitening = fit_whitening(first_raw)
    first_white = whitening.apply_stats(first_raw)
    second_epochs = make_epochs(second, n_epochs)
    second_white = whitening.apply_stats(epoch_stats(second, second_epochs))
    rng = np.random.default_rng(seed)
    shuffles = [rng.permutation(second.n_samples) for _ in range(n_permutations)]
    permuted_white = [
        whitening.apply_stats(epoch_stats(second.permute_time(order), second_epochs))
        for order in shuffles
    ]
    results = []
    for d_s in candidates:
        candidate = config.model_copy(update={"d_s": d_s, "d_n": None})
        fit = fit_s_projection(first_white, candidate)
        loss = _holdout_loss(second_white, fit.projection)
        baseline = np.array(
            [_holdout_loss(p, fit.projection) for p in permuted_white]
        )
        results.append(
            HoldoutResult(
                d_s=d_s,
                loss=loss,
                permuted_mean=float(baseline.mean()),
                permuted_std=float(baseline.std(ddof=1)) if baseline.size > 1 else 0.0,
                permuted_losses=tuple(baseline.tolist()),
            )
        )
        logger.info(
            "Hold-out d_s=%d: loss %.4g vs permuted %.4g ± %.4g",
            d_s,
            loss,
            results[-1].permuted_mean,
            results[-1].permuted_std,
        )
    return results


@dataclass(frozen=True)
class BniseReport:
    """Cumulative standardized excess loss per candidate dimension."""

    per_d: list[float]  # index k holds BNISE(k + 1)
    n_permutations: int
    seed: int
    holdout: list[HoldoutResult]
    undefined: list[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Table with columns d, bnise, loss, permuted_mean, permuted_std."""
        by_d = {h.d_s: h for h in self.holdout}
        rows = []
        for index, value in enumerate(self.per_d):
            d = index + 1
            h = by_d.get(d)
            rows.append(
                {
                    "d": d,
                    "bnise": value,
                    "loss": h.loss if h else np.nan,
                    "permuted_mean": h.permuted_mean if h else np.nan,
                    "permuted_std": h.permuted_std if h else np.nan,
                }
            )
        return pd.DataFrame(rows)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict (undefined values become null)."""
        return {
            "per_d": [None if math.isnan(v) else v for v in self.per_d],
            "n_permutations": self.n_permutations,
            "seed": self.seed,
            "undefined": self.undefined,
            "holdout": [
                {
                    "d_s": h.d_s,
                    "loss": h.loss,
                    "permuted_mean": h.permuted_mean,
                    "permuted_std": h.permuted_std,
                }
                for h in self.holdout
            ],
        }


def bnise(  # noqa: PLR0913
    series: TimeSeries,
    up_to_d: int,
    n_epochs: int,
    n_permutations: int,
    seed: int,
    config: SsaConfig,
) -> BniseReport:
    """Baseline-normalized integral stationary error for d = 1..up_to_d.

    BNISE(d) = Σ_{d' < d} (L_{d'} - E[L_{d'}]) / σ(L_{d'}), where the
    expectation and spread come from the time-permuted hold-out copies.
    BNISE(1) = 0. A candidate whose baseline has zero spread is recorded as
    undefined and every BNISE value that sums over it is NaN.

    Args:
        series: Raw observed series.
        up_to_d: Largest d reported, 1 <= up_to_d <= D.
        n_epochs: Number of epochs in each half.
        n_permutations: Permuted copies per candidate.
        seed: Seed of the permutation stream.
        config: Optimizer settings.

    Returns:
        The report.
    """
    if not 1 <= up_to_d <= series.n_channels:
        msg = f"up_to_d must lie in 1..{series.n_channels}, got {up_to_d}"
        raise ConfigError(msg)
    holdout = holdout_stationarity_check(
        series, range(1, up_to_d), n_epochs, n_permutations, seed, config
    )
    undefined = []
    per_d = [0.0]
    total = 0.0
    for result in holdout:
        z = result.z_score
        if math.isnan(z):
            error = DivisionDegeneracyError(
                f"permutation baseline of d_s={result.d_s} has zero spread"
            )
            logger.warning("%s; BNISE undefined from d=%d on", error, result.d_s + 1)
            undefined.append(result.d_s)
        total += z
        per_d.append(total)
    return BniseReport(
        per_d=per_d,
        n_permutations=n_permutations,
        seed=seed,
        holdout=holdout,
        undefined=undefined,
    )
