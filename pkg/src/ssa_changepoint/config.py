"""Pipeline configuration and environment defaults."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ssa_changepoint.cusum import CusumConfig
from ssa_changepoint.errors import ConfigError
from ssa_changepoint.experiment import Condition, ExperimentPlan, OrderStudyPlan
from ssa_changepoint.kohlmorgen_lemm import KohlLemmConfig
from ssa_changepoint.report import DetectorKind
from ssa_changepoint.slcd import SlcdConfig
from ssa_changepoint.ssa import SsaConfig
from ssa_changepoint.synth import SynthConfig

ENV_JOBS = "SSA_CPD_JOBS"
ENV_LOG_LEVEL = "SSA_CPD_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "WARNING"


def env_jobs() -> int:
    """Worker count from the environment (default 1).

    Raises:
        ConfigError: If the variable is set but not a positive integer.
    """
    raw = os.environ.get(ENV_JOBS, "1").strip() or "1"
    try:
        jobs = int(raw)
    except ValueError as exc:
        msg = f"{ENV_JOBS} must be a positive integer, got {raw!r}"
        raise ConfigError(msg) from exc
    if jobs < 1:
        msg = f"{ENV_JOBS} must be a positive integer, got {raw!r}"
        raise ConfigError(msg)
    return jobs


def env_log_level() -> str:
    """Log level name from the environment (default WARNING)."""
    return os.environ.get(ENV_LOG_LEVEL, DEFAULT_LOG_LEVEL).strip().upper()


class OrderStage(BaseModel):
    """Settings of the likelihood-ratio order selection stage."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(default=0.01, gt=0.0, lt=1.0)


class BniseStage(BaseModel):
    """Settings of the hold-out BNISE stage."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_permutations: int = Field(default=20, ge=2)
    up_to_d: int | None = Field(default=None, ge=1)


class PipelineConfig(BaseModel):
    """Everything one ``pipeline`` run needs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    format_version: Literal[1] = 1
    seed: int = Field(default=0, ge=0)
    out: Path = Path("results")
    jobs: int = Field(default=1, ge=1)

    synth: SynthConfig | None = None
    data: Path | None = None
    truth: Path | None = None
    n_epochs: int = Field(default=30, ge=2)

    d_s: tuple[int, ...] = ()
    ssa: SsaConfig = SsaConfig(d_s=1)
    order: OrderStage | None = None
    bnise: BniseStage | None = None

    detectors: tuple[DetectorKind, ...] = (DetectorKind.SLCD,)
    conditions: tuple[Condition, ...] = (Condition.BASELINE, Condition.SSA)
    cusum_channel: int = Field(default=0, ge=0)
    slcd: SlcdConfig = SlcdConfig()
    cusum: CusumConfig = CusumConfig()
    kl: KohlLemmConfig = KohlLemmConfig()

    experiment: ExperimentPlan | None = None
    order_study: OrderStudyPlan | None = None

    @model_validator(mode="after")
    def _one_source(self) -> PipelineConfig:
        if (self.synth is None) == (self.data is None):
            msg = "give exactly one of 'synth' and 'data'"
            raise ValueError(msg)
        return self

    @classmethod
    def from_file(cls, path: Path, **overrides: object) -> PipelineConfig:
        """Load a JSON config, applying non-None keyword overrides.

        Raises:
            ConfigError: If the document does not validate.
        """
        document = json.loads(path.read_text())
        document.update({k: v for k, v in overrides.items() if v is not None})
        return parse_model(cls, document)

    def fingerprint(self) -> str:
        """Short digest of the canonical JSON form, used to key cached stages."""
        payload = self.model_dump(mode="json", exclude={"jobs", "out"})
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.blake2b(canonical.encode(), digest_size=8).hexdigest()


def parse_model[M: BaseModel](model: type[M], document: object) -> M:
    """Validate a document against a config model.

    Raises:
        ConfigError: With pydantic's message when validation fails.
    """
    try:
        return model.model_validate(document)
    except pydantic.ValidationError as exc:
        raise ConfigError(str(exc)) from exc
