"""Epoch-aligned change-point reports shared by every detector."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from ssa_changepoint.errors import DimensionMismatchError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


class DetectorKind(StrEnum):
    """The available change-point detectors."""

    SLCD = "slcd"
    CUSUM = "cusum"
    KL = "kl"


@dataclass(frozen=True)
class ChangePointReport:
    """Per-boundary flags and scores over one epoching.

    Boundary i sits between epoch i and epoch i + 1. Higher scores are more
    change-like; ``tau`` is the detector's trade-off parameter the flags were
    produced with.
    """

    epoch_boundaries: NDArray[np.bool_]
    scores: NDArray[np.float64]
    detector: DetectorKind
    tau: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Coerce arrays and check that flags and scores line up."""
        flags = np.asarray(self.epoch_boundaries, dtype=bool).ravel()
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if flags.shape != scores.shape:
            msg = f"{flags.size} boundary flags but {scores.size} scores"
            raise DimensionMismatchError(msg)
        flags.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "epoch_boundaries", flags)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "detector", DetectorKind(self.detector))

    @classmethod
    def from_flags(
        cls,
        flags: ArrayLike,
        scores: ArrayLike,
        detector: DetectorKind,
        tau: float,
        **metadata: Any,  # noqa: ANN401
    ) -> ChangePointReport:
        """Build a report, collecting keyword arguments into ``metadata``."""
        return cls(
            epoch_boundaries=np.asarray(flags, dtype=bool),
            scores=np.asarray(scores, dtype=np.float64),
            detector=detector,
            tau=float(tau),
            metadata=metadata,
        )

    @property
    def n_boundaries(self) -> int:
        """Number of epoch boundaries (n_epochs - 1)."""
        return int(self.epoch_boundaries.size)

    @property
    def changepoints(self) -> list[int]:
        """Indices of the flagged boundaries."""
        return np.flatnonzero(self.epoch_boundaries).tolist()

    def to_frame(self) -> pd.DataFrame:
        """Table with columns boundary_index, score, flagged."""
        return pd.DataFrame(
            {
                "boundary_index": np.arange(self.n_boundaries),
                "score": self.scores,
                "flagged": self.epoch_boundaries,
            }
        )

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible dict."""
        return {
            "detector": self.detector.value,
            "tau": self.tau,
            "epoch_boundaries": self.epoch_boundaries.tolist(),
            "scores": self.scores.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ChangePointReport:
        """Inverse of :meth:`to_dict`."""
        return cls(
            epoch_boundaries=np.asarray(payload["epoch_boundaries"], dtype=bool),
            scores=np.asarray(payload["scores"], dtype=np.float64),
            detector=DetectorKind(payload["detector"]),
            tau=float(payload["tau"]),
            metadata=dict(payload.get("metadata", {})),
        )
