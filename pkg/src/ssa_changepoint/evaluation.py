"""Epoch-aligned confusion counts, ROC curves and AUC."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
import pandas as pd
from sklearn import metrics

from ssa_changepoint.errors import DimensionMismatchError, UndefinedRocError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from ssa_changepoint.report import ChangePointReport

logger = logging.getLogger(__name__)


class Confusion(NamedTuple):
    """Counts over the n - 1 epoch boundaries."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def tpr(self) -> float:
        """True positive rate (NaN without true boundaries)."""
        positives = self.tp + self.fn
        return self.tp / positives if positives else float("nan")

    @property
    def fpr(self) -> float:
        """False positive rate over the non-change boundaries."""
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else float("nan")


def _as_flags(values: ArrayLike) -> NDArray[np.bool_]:
    return np.asarray(values, dtype=bool).ravel()


def confusion_from_flags(
    flags: ArrayLike, truth: ArrayLike, tolerance: int = 0
) -> Confusion:
    """Count matches between reported and true boundary flags.

    With ``tolerance`` t > 0 a reported boundary counts as a true positive when
    a true boundary lies within t boundaries of it, and a true boundary counts
    as found when a reported one lies within t of it.

    Raises:
        DimensionMismatchError: If the flag vectors differ in length.
    """
    reported = _as_flags(flags)
    actual = _as_flags(truth)
    if reported.shape != actual.shape:
        msg = f"{reported.size} reported boundaries vs {actual.size} true boundaries"
        raise DimensionMismatchError(msg)
    if tolerance <= 0:
        tp = int(np.sum(reported & actual))
        fp = int(np.sum(reported & ~actual))
        fn = int(np.sum(~reported & actual))
        tn = int(np.sum(~reported & ~actual))
        return Confusion(tp, fp, fn, tn)
    kernel = np.ones(2 * tolerance + 1, dtype=np.int64)
    near_truth = np.convolve(actual.astype(np.int64), kernel, mode="same") > 0
    near_report = np.convolve(reported.astype(np.int64), kernel, mode="same") > 0
    tp = int(np.sum(reported & near_truth))
    fp = int(np.sum(reported & ~near_truth))
    fn = int(np.sum(actual & ~near_report))
    tn = int(np.sum(~reported & ~actual))
    return Confusion(tp, fp, fn, tn)


def confusion_at_boundaries(
    report: ChangePointReport, truth: ArrayLike, tolerance: int = 0
) -> Confusion:
    """Confusion counts of a report against the true boundary flags."""
    return confusion_from_flags(report.epoch_boundaries, truth, tolerance)


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by FPR, including (0, 0) and (1, 1)."""

    fpr: NDArray[np.float64]
    tpr: NDArray[np.float64]
    tau_values: NDArray[np.float64]
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        """(fpr, tpr) pairs."""
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), strict=True))

    def to_frame(self) -> pd.DataFrame:
        """Table with columns fpr, tpr, tau."""
        return pd.DataFrame({"fpr": self.fpr, "tpr": self.tpr, "tau": self.tau_values})

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict (infinite taus become null)."""
        return {
            "auc": self.auc,
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "tau": [float(t) if np.isfinite(t) else None for t in self.tau_values],
        }


def _check_truth(truth: NDArray[np.bool_]) -> None:
    if truth.all() or not truth.any():
        msg = (
            "ROC is undefined without both change and non-change boundaries "
            f"({int(truth.sum())} of {truth.size} are changes)"
        )
        raise UndefinedRocError(msg)


def roc_from_scores(scores: ArrayLike, truth: ArrayLike) -> RocCurve:
    """ROC over every distinct score threshold.

    Boundaries with equal scores enter the curve in one step. The first point
    is (0, 0) at an infinite threshold and the last is (1, 1).

    Raises:
        DimensionMismatchError: If scores and truth differ in length.
        UndefinedRocError: If truth is all-true or all-false.
    """
    values = np.asarray(scores, dtype=np.float64).ravel()
    actual = _as_flags(truth)
    if values.shape != actual.shape:
        msg = f"{values.size} scores vs {actual.size} true boundaries"
        raise DimensionMismatchError(msg)
    _check_truth(actual)
    fpr, tpr, thresholds = metrics.roc_curve(actual, values, drop_intermediate=False)
    return RocCurve(
        fpr=fpr.astype(np.float64),
        tpr=tpr.astype(np.float64),
        tau_values=thresholds.astype(np.float64),
        auc=float(metrics.auc(fpr, tpr)),
    )


def roc_from_flag_sweep(
    flag_sets: Sequence[ArrayLike], truth: ArrayLike, taus: Sequence[float]
) -> RocCurve:
    """ROC from one boundary-flag vector per value of a detector's τ.

    Raises:
        UndefinedRocError: If truth is all-true or all-false.
    """
    actual = _as_flags(truth)
    _check_truth(actual)
    rows = [(0.0, 0.0, np.inf), (1.0, 1.0, -np.inf)]
    for flags, tau in zip(flag_sets, taus, strict=True):
        counts = confusion_from_flags(flags, actual)
        rows.append((counts.fpr, counts.tpr, float(tau)))
    frame = (
        pd.DataFrame(rows, columns=["fpr", "tpr", "tau"])
        .sort_values(["fpr", "tpr"], kind="stable")
        .drop_duplicates(subset=["fpr", "tpr"], keep="first")
    )
    fpr = frame["fpr"].to_numpy(dtype=np.float64)
    tpr = frame["tpr"].to_numpy(dtype=np.float64)
    return RocCurve(
        fpr=fpr,
        tpr=tpr,
        tau_values=frame["tau"].to_numpy(dtype=np.float64),
        auc=float(metrics.auc(fpr, tpr)),
    )


def report_auc(report: ChangePointReport, truth: ArrayLike) -> float:
    """AUC of a report's boundary scores."""
    return roc_from_scores(report.scores, truth).auc
