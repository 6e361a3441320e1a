"""Closed-form Kullback-Leibler divergences between Gaussians."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg

from ssa_changepoint.errors import NotPositiveDefiniteError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


def _cholesky(cov: NDArray[np.float64]) -> NDArray[np.float64]:
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        msg = "covariance is not symmetric positive definite"
        raise NotPositiveDefiniteError(msg) from exc


def _as_gaussian(
    mean: ArrayLike, cov: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    mu = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    return mu, sigma


def kl_gauss_to_standard(mean: ArrayLike, cov: ArrayLike) -> float:
    """KL[𝒩(mean, cov) ‖ 𝒩(0, I)] = ½(tr Σ + μᵀμ - d - log det Σ).

    Raises:
        NotPositiveDefiniteError: If ``cov`` has no Cholesky factor.
    """
    mu, sigma = _as_gaussian(mean, cov)
    factor = _cholesky(sigma)
    log_det = 2.0 * np.sum(np.log(np.diag(factor)))
    value = 0.5 * (np.trace(sigma) + mu @ mu - mu.size - log_det)
    return max(float(value), 0.0)


def kl_gauss(
    mean_a: ArrayLike, cov_a: ArrayLike, mean_b: ArrayLike, cov_b: ArrayLike
) -> float:
    """KL[𝒩(a) ‖ 𝒩(b)] between two multivariate Gaussians.

    Raises:
        NotPositiveDefiniteError: If either covariance has no Cholesky factor.
    """
    mu_a, sigma_a = _as_gaussian(mean_a, cov_a)
    mu_b, sigma_b = _as_gaussian(mean_b, cov_b)
    factor_a = _cholesky(sigma_a)
    factor_b = _cholesky(sigma_b)
    solved = linalg.cho_solve((factor_b, True), sigma_a)
    delta = mu_b - mu_a
    mahalanobis = delta @ linalg.cho_solve((factor_b, True), delta)
    log_det_a = 2.0 * np.sum(np.log(np.diag(factor_a)))
    log_det_b = 2.0 * np.sum(np.log(np.diag(factor_b)))
    value = 0.5 * (np.trace(solved) + mahalanobis - mu_a.size + log_det_b - log_det_a)
    return max(float(value), 0.0)


def kl_gauss_symmetrized(
    mean_a: ArrayLike, cov_a: ArrayLike, mean_b: ArrayLike, cov_b: ArrayLike
) -> float:
    """½ KL(a ‖ b) + ½ KL(b ‖ a).

    The log-determinant terms cancel, leaving
    ¼ [tr(Σ_b⁻¹Σ_a) + tr(Σ_a⁻¹Σ_b) + Δᵀ(Σ_a⁻¹ + Σ_b⁻¹)Δ] - d/2,
    which is symmetric in its arguments term by term.

    Raises:
        NotPositiveDefiniteError: If either covariance has no Cholesky factor.
    """
    mu_a, sigma_a = _as_gaussian(mean_a, cov_a)
    mu_b, sigma_b = _as_gaussian(mean_b, cov_b)
    factor_a = _cholesky(sigma_a)
    factor_b = _cholesky(sigma_b)
    delta = mu_a - mu_b
    trace_ab = np.trace(linalg.cho_solve((factor_b, True), sigma_a))
    trace_ba = np.trace(linalg.cho_solve((factor_a, True), sigma_b))
    quad = delta @ linalg.cho_solve((factor_a, True), delta) + delta @ linalg.cho_solve(
        (factor_b, True), delta
    )
    value = 0.25 * ((trace_ab + trace_ba) + quad) - 0.5 * mu_a.size
    return max(float(value), 0.0)


def pairwise_symmetrized_kl(
    means: NDArray[np.float64],
    covariances: NDArray[np.float64],
    precisions: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Symmetrized KL between every pair of n Gaussians.

    Args:
        means: n x d means.
        covariances: n x d x d covariances.
        precisions: n x d x d inverses of ``covariances``.

    Returns:
        Symmetric n x n matrix with a zero diagonal.
    """
    d = means.shape[1]
    # tr(Pⱼ Σᵢ) for all (i, j)
    cross_trace = np.einsum("jab,iba->ij", precisions, covariances)
    delta = means[:, np.newaxis, :] - means[np.newaxis, :, :]
    quad_i = np.einsum("ija,iab,ijb->ij", delta, precisions, delta)
    quad = quad_i + quad_i.T
    distances = 0.25 * (cross_trace + cross_trace.T + quad) - 0.5 * d
    distances = 0.5 * (distances + distances.T)
    np.fill_diagonal(distances, 0.0)
    return np.maximum(distances, 0.0)
