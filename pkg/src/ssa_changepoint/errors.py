"""Exception hierarchy shared by the library and the command line."""

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class SsaCpdError(Exception):
    """Base class for every error raised by ssa_changepoint."""

    exit_code = EXIT_RUNTIME


class ValidationError(SsaCpdError, ValueError):
    """Input or configuration rejected before any computation."""

    exit_code = EXIT_VALIDATION


class TooFewSamplesError(ValidationError):
    """The series is too short for the requested epoching."""


class DimensionMismatchError(ValidationError):
    """Array shapes of two collaborating objects disagree."""


class ArityError(ValidationError):
    """A univariate method received multichannel input."""


class ConfigError(ValidationError):
    """A configuration value is outside its admissible range."""


class NumericalError(SsaCpdError):
    """A computation could not produce a finite, well-defined result."""


class DegenerateEpochError(NumericalError):
    """An epoch holds fewer than two samples."""


class RankDeficiencyError(NumericalError):
    """The average epoch covariance is numerically singular."""


class NotPositiveDefiniteError(NumericalError):
    """A covariance matrix failed its Cholesky factorization."""


class SingularCovarianceError(NumericalError):
    """An epoch covariance stays singular after regularization."""

    def __init__(self, epoch: int, detail: str = "") -> None:
        """Create the error for the given epoch index."""
        self.epoch = epoch
        message = f"covariance of epoch {epoch} is singular"
        super().__init__(f"{message}: {detail}" if detail else message)


class OptimizationError(NumericalError):
    """Every optimizer restart diverged."""


class DivisionDegeneracyError(NumericalError):
    """A permutation baseline has zero spread."""


class ZeroSigmaError(NumericalError):
    """The kernel-width rule of thumb collapsed to zero."""


class UndefinedRocError(NumericalError):
    """The ground truth has no positives or no negatives."""


class ExperimentError(NumericalError):
    """Too many realizations of an experiment failed."""


class StageError(SsaCpdError):
    """A pipeline stage failed; wraps the underlying error."""

    def __init__(self, stage: str, cause: Exception) -> None:
        """Create the error naming the failed stage."""
        self.stage = stage
        self.cause = cause
        if isinstance(cause, OSError):
            self.exit_code = EXIT_IO
        else:
            self.exit_code = getattr(cause, "exit_code", EXIT_RUNTIME)
        super().__init__(f"stage '{stage}' failed: {cause}")
