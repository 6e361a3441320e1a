"""Stationary Subspace Analysis on whitened epoch statistics.

The s-projection minimizes, and the n-projection maximizes,

    f(B) = Σᵢ [ -log det(B Σ̂ᵢ Bᵀ) + ‖B μ̂ᵢ‖² ]

over matrices with orthonormal rows. Both searches run steepest descent on
the orthogonal group: B is the top rows of a rotation R, and each accepted
step multiplies R by exp(-η M) for an antisymmetric M, after which the
parameterization is re-anchored at M = 0.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from ssa_changepoint.errors import (
    ConfigError,
    DimensionMismatchError,
    OptimizationError,
    SingularCovarianceError,
)
from ssa_changepoint.timeseries import (
    EpochStats,
    TimeSeries,
    WhiteningTransform,
    array_from_json,
    array_to_json,
    epoch_stats,
    fit_whitening,
    make_epochs,
    transform_stats,
)

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from ssa_changepoint.timeseries import Epoching

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-12
ARMIJO_C = 1e-4
MIN_STEP = 1e-14


class Mode(StrEnum):
    """Direction of the optimization."""

    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"

    @property
    def sign(self) -> float:
        """+1 when minimizing f, -1 when maximizing (i.e. minimizing -f)."""
        return 1.0 if self is Mode.MINIMIZE else -1.0


class SsaConfig(BaseModel):
    """Dimensions and optimizer settings for an SSA fit."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_s: int | None = Field(default=None, ge=1)
    d_n: int | None = Field(default=None, ge=1)
    n_restarts: int = Field(default=5, ge=1)
    max_iters: int = Field(default=500, ge=1)
    grad_tol: float = Field(default=1e-6, gt=0)
    step_init: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _one_dimension(self) -> SsaConfig:
        if self.d_s is None and self.d_n is None:
            msg = "SsaConfig needs d_s or d_n"
            raise ValueError(msg)
        return self

    def stationary_dim(self, D: int) -> int:
        """Resolve d_s for a D-dimensional problem."""
        d_s = self.d_s if self.d_s is not None else D - (self.d_n or 0)
        if not 1 <= d_s < D:
            msg = f"need 1 <= d_s < D, got d_s={d_s}, D={D}"
            raise ConfigError(msg)
        return d_s

    def nonstationary_dim(self, D: int) -> int:
        """Resolve d_n for a D-dimensional problem."""
        d_n = self.d_n if self.d_n is not None else D - (self.d_s or 0)
        if not 1 <= d_n < D:
            msg = f"need 1 <= d_n < D, got d_n={d_n}, D={D}"
            raise ConfigError(msg)
        return d_n


@dataclass(frozen=True)
class RotationParam:
    """Antisymmetric D x D matrix M stored as its strictly-upper triangle."""

    dim: int
    upper: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Check the number of free parameters."""
        upper = np.asarray(self.upper, dtype=np.float64).ravel()
        expected = self.dim * (self.dim - 1) // 2
        if upper.size != expected:
            msg = f"{upper.size} parameters for a {self.dim}x{self.dim} rotation"
            raise DimensionMismatchError(msg)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def zeros(cls, dim: int) -> RotationParam:
        """The identity rotation."""
        return cls(dim=dim, upper=np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike) -> RotationParam:
        """Take the strictly-upper triangle of a (nominally) antisymmetric matrix."""
        square = np.asarray(matrix, dtype=np.float64)
        rows, cols = np.triu_indices(square.shape[0], k=1)
        return cls(dim=square.shape[0], upper=square[rows, cols])

    def matrix(self) -> NDArray[np.float64]:
        """Return M, antisymmetric by construction."""
        out = np.zeros((self.dim, self.dim))
        rows, cols = np.triu_indices(self.dim, k=1)
        out[rows, cols] = self.upper
        out[cols, rows] = -self.upper
        return out


def rotation_exp(param: RotationParam) -> NDArray[np.float64]:
    """exp(M): an orthogonal matrix with determinant +1."""
    return linalg.expm(param.matrix())


@dataclass(frozen=True)
class ProjectionFit:
    """Outcome of one projection search."""

    rotation: NDArray[np.float64]  # D x D orthogonal; projection = top rows
    dim: int
    mode: Mode
    objective: float
    converged: bool
    n_iterations: int
    restart: int
    clamped: bool

    @property
    def projection(self) -> NDArray[np.float64]:
        """The fitted d x D projection with orthonormal rows."""
        return self.rotation[: self.dim]

    @property
    def complement(self) -> NDArray[np.float64]:
        """The (D - d) x D orthonormal complement of the projection."""
        return self.rotation[self.dim :]


def _projected_logdets(
    covariances: NDArray[np.float64],
) -> tuple[NDArray[np.float64], bool]:
    """log det of each projected covariance with an eigenvalue floor."""
    finite = np.isfinite(covariances).all(axis=(1, 2))
    if not finite.all():
        raise SingularCovarianceError(int(np.flatnonzero(~finite)[0]), "non-finite")
    eigenvalues = np.linalg.eigvalsh(covariances)
    clamped = bool(np.any(eigenvalues < EIGENVALUE_FLOOR))
    return np.log(np.maximum(eigenvalues, EIGENVALUE_FLOOR)).sum(axis=1), clamped


def _objective(
    stats: EpochStats, projection: NDArray[np.float64]
) -> tuple[float, bool]:
    projected = transform_stats(stats, projection)
    logdets, clamped = _projected_logdets(projected.covariances)
    value = float(np.sum(-logdets) + np.sum(projected.means**2))
    return value, clamped


def ssa_objective(stats: EpochStats, projection: ArrayLike) -> float:
    """Σᵢ [-log det(BΣ̂ᵢBᵀ) + ‖Bμ̂ᵢ‖²] for a projection B on whitened stats.

    Projected covariance eigenvalues below 1e-12 are floored inside the
    log-determinant.
    """
    matrix = np.atleast_2d(np.asarray(projection, dtype=np.float64))
    value, clamped = _objective(stats, matrix)
    if clamped:
        logger.warning("Projected covariance clamped at eigenvalue floor")
    return value


def ssa_gradient(
    stats: EpochStats,
    rotation: ArrayLike,
    dim: int,
    mode: Mode = Mode.MINIMIZE,
) -> NDArray[np.float64]:
    """Gradient of the signed objective in the antisymmetric parameterization.

    For g(M) = sign · f(top ``dim`` rows of exp(M) R) this returns the
    antisymmetric matrix G with G[j, k] = ∂g/∂M[j, k] for j < k at M = 0,
    where M[j, k] and M[k, j] = -M[j, k] move together. ``sign`` is +1 for
    minimization and -1 for maximization, so descending along -G improves
    the objective in both modes.

    Args:
        stats: Whitened epoch statistics (dimension D).
        rotation: Current D x D orthogonal matrix R.
        dim: Number of rows d of the projection.
        mode: Optimization direction.

    Returns:
        Antisymmetric D x D gradient.
    """
    base = np.asarray(rotation, dtype=np.float64)
    rotated = transform_stats(stats, base)
    covariances = rotated.covariances
    means = rotated.means
    top = covariances[:, :dim, :dim]
    eigenvalues, eigenvectors = np.linalg.eigh(top)
    eigenvalues = np.maximum(eigenvalues, EIGENVALUE_FLOOR)
    inverse_top = np.einsum(
        "nij,nj,nkj->nik", eigenvectors, 1.0 / eigenvalues, eigenvectors
    )
    # d/dM of -log det(PΣ̃Pᵀ) is -2 Pᵀ(PΣ̃Pᵀ)⁻¹PΣ̃, in the first d rows only
    euclidean = np.zeros((stats.dim, stats.dim))
    euclidean[:dim] = -2.0 * np.einsum(
        "nij,njk->ik", inverse_top, covariances[:, :dim, :]
    )
    # d/dM of ‖P μ̃‖² is 2 PᵀP μ̃ μ̃ᵀ
    euclidean[:dim] += 2.0 * means[:, :dim].T @ means
    gradient = euclidean - euclidean.T
    return mode.sign * gradient


def _initial_rotation(D: int, seed: int, restart: int) -> NDArray[np.float64]:
    if restart == 0:
        return np.eye(D)
    rng = np.random.default_rng([seed, restart])
    q, r = np.linalg.qr(rng.standard_normal((D, D)))
    return q * np.sign(np.diag(r))


def _descend(
    stats: EpochStats,
    dim: int,
    mode: Mode,
    config: SsaConfig,
    restart: int,
) -> ProjectionFit:
    """Steepest descent with Armijo backtracking from one starting rotation."""
    D = stats.dim
    rotation = _initial_rotation(D, config.seed, restart)
    value, clamped = _objective(stats, rotation[:dim])
    signed = mode.sign * value
    step = config.step_init
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        gradient = ssa_gradient(stats, rotation, dim, mode)
        if np.max(np.abs(gradient)) < config.grad_tol:
            converged = True
            break
        # directional derivative along -G, counting each (j, k) pair once
        slope = 0.5 * float(np.sum(gradient**2))
        step = min(2.0 * step, config.step_init)
        accepted = False
        candidate, candidate_value, candidate_clamped = rotation, value, False
        candidate_signed = signed
        while step > MIN_STEP:
            candidate = linalg.expm(-step * gradient) @ rotation
            candidate_value, candidate_clamped = _objective(stats, candidate[:dim])
            candidate_signed = mode.sign * candidate_value
            if np.isfinite(candidate_signed) and (
                candidate_signed <= signed - ARMIJO_C * step * slope
            ):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no decrease is possible at machine precision: a stationary point
            converged = True
            break
        rotation, value, signed = candidate, candidate_value, candidate_signed
        clamped = clamped or candidate_clamped
        logger.debug("restart %d iter %d objective %.10g", restart, iteration, value)
    if clamped:
        logger.warning("Restart %d hit the eigenvalue floor", restart)
    return ProjectionFit(
        rotation=rotation,
        dim=dim,
        mode=mode,
        objective=value,
        converged=converged,
        n_iterations=iteration,
        restart=restart,
        clamped=clamped,
    )


def _run_restarts(
    stats: EpochStats, dim: int, mode: Mode, config: SsaConfig
) -> ProjectionFit:
    restarts = range(config.n_restarts)
    if config.jobs > 1 and config.n_restarts > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            fits = list(
                pool.map(lambda r: _descend(stats, dim, mode, config, r), restarts)
            )
    else:
        fits = [_descend(stats, dim, mode, config, r) for r in restarts]
    finite = [fit for fit in fits if np.isfinite(fit.objective)]
    if not finite:
        msg = f"all {config.n_restarts} restarts diverged"
        raise OptimizationError(msg)
    # min over signed objective; ties resolved by the lowest restart index
    best = min(finite, key=lambda fit: (mode.sign * fit.objective, fit.restart))
    logger.info(
        "%s d=%d: best objective %.6g from restart %d (%d iterations, converged=%s)",
        mode.value,
        dim,
        best.objective,
        best.restart,
        best.n_iterations,
        best.converged,
    )
    return best


def fit_s_projection(stats: EpochStats, config: SsaConfig) -> ProjectionFit:
    """Minimize the SSA objective for the d_s-dimensional s-projection.

    Args:
        stats: Whitened epoch statistics.
        config: Dimensions and optimizer settings.

    Returns:
        The best fit over ``config.n_restarts`` restarts.

    Raises:
        OptimizationError: If every restart produced a non-finite objective.
    """
    return _run_restarts(stats, config.stationary_dim(stats.dim), Mode.MINIMIZE, config)


def fit_n_projection(stats: EpochStats, config: SsaConfig) -> ProjectionFit:
    """Maximize the SSA objective for the d_n-dimensional n-projection.

    Args:
        stats: Whitened epoch statistics.
        config: Dimensions and optimizer settings.

    Returns:
        The best fit over ``config.n_restarts`` restarts.

    Raises:
        OptimizationError: If every restart produced a non-finite objective.
    """
    dim = config.nonstationary_dim(stats.dim)
    return _run_restarts(stats, dim, Mode.MAXIMIZE, config)


@dataclass(frozen=True)
class DemixingModel:
    """Whitening plus s- and n-projections in whitened coordinates."""

    whitening: WhiteningTransform
    b_s: NDArray[np.float64]
    b_n: NDArray[np.float64]
    objective_s: float
    objective_n: float

    def __post_init__(self) -> None:
        """Check that both projections act on the whitening's dimension."""
        b_s = np.atleast_2d(np.asarray(self.b_s, dtype=np.float64))
        b_n = np.atleast_2d(np.asarray(self.b_n, dtype=np.float64))
        for name, block in (("b_s", b_s), ("b_n", b_n)):
            if block.shape[1] != self.whitening.dim:
                expected = self.whitening.dim
                msg = f"{name} has {block.shape[1]} columns, expected {expected}"
                raise DimensionMismatchError(msg)
        object.__setattr__(self, "b_s", b_s)
        object.__setattr__(self, "b_n", b_n)

    @property
    def dim(self) -> int:
        """Observation dimension D."""
        return self.whitening.dim

    def demixing_matrix(self) -> NDArray[np.float64]:
        """B̂ = [B̂ˢ; B̂ⁿ] in whitened coordinates."""
        return np.vstack([self.b_s, self.b_n])

    def mixing_matrix(self) -> NDArray[np.float64]:
        """Â = (B̂ W)⁻¹, the estimated mixing in observation coordinates."""
        return np.linalg.inv(self.demixing_matrix() @ self.whitening.matrix)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict."""
        return {
            "whitening": self.whitening.to_dict(),
            "b_s": array_to_json(self.b_s),
            "b_n": array_to_json(self.b_n),
            "objective_s": self.objective_s,
            "objective_n": self.objective_n,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> DemixingModel:
        """Inverse of :meth:`to_dict`."""
        return cls(
            whitening=WhiteningTransform.from_dict(payload["whitening"]),
            b_s=array_from_json(payload["b_s"]),
            b_n=array_from_json(payload["b_n"]),
            objective_s=float(payload["objective_s"]),
            objective_n=float(payload["objective_n"]),
        )


def fit_demixing(
    series: TimeSeries,
    config: SsaConfig,
    *,
    n_epochs: int | None = None,
    epochs: Epoching | None = None,
    include_mean_scatter: bool = False,
) -> DemixingModel:
    """Whiten a series and fit both its s- and n-projections.

    Args:
        series: Raw observed series.
        config: Dimensions and optimizer settings.
        n_epochs: Number of equal epochs, used when ``epochs`` is None.
        epochs: Explicit epoching.
        include_mean_scatter: Whitening reading (see :func:`fit_whitening`).

    Returns:
        The fitted model.
    """
    if epochs is None:
        if n_epochs is None:
            msg = "fit_demixing needs n_epochs or epochs"
            raise ConfigError(msg)
        epochs = make_epochs(series, n_epochs)
    raw = epoch_stats(series, epochs)
    whitening = fit_whitening(raw, include_mean_scatter=include_mean_scatter)
    whitened = whitening.apply_stats(raw)
    s_fit = fit_s_projection(whitened, config)
    n_fit = fit_n_projection(whitened, config)
    return DemixingModel(
        whitening=whitening,
        b_s=s_fit.projection,
        b_n=n_fit.projection,
        objective_s=s_fit.objective,
        objective_n=n_fit.objective,
    )


def extract_sources(
    series: TimeSeries, model: DemixingModel, which: str = "n"
) -> TimeSeries:
    """Apply the fitted projection to the whitened series.

    Args:
        series: Raw observed series with D channels.
        model: A fitted model for the same D.
        which: "n" for ŝⁿ(t) = B̂ⁿ W (x(t) - shift), "s" for ŝˢ(t).

    Returns:
        The estimated sources as a d x T series.

    Raises:
        DimensionMismatchError: If the series has the wrong number of channels.
    """
    if which not in {"n", "s"}:
        msg = f"which must be 'n' or 's', got {which!r}"
        raise ConfigError(msg)
    whitened = model.whitening.apply(series)
    projection = model.b_n if which == "n" else model.b_s
    return TimeSeries(projection @ whitened.data)
