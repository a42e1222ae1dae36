"""Run configuration: one TOML file drives every command.

Example::

    [dataset]
    dataset_seed = 0
    n_random = 5            # paired sim/real random-action episodes
    n_crawl = 10            # obstructed crawling episodes per domain
    random_duration_s = 300.0
    crawl_cycles = 20
    wall_x = 75.0           # mm, must lie inside the front legs' reach
    wall_jitter = 1.5       # mm, per-episode uniform jitter
    write_csv = true

    [dataset.real]          # overrides of the perturbed-domain parameters
    noise_sigma = 0.01

    [training]
    variants = ["dual-ae", "dual-ae-no-p", "single-ae", "sim-only-lstm", "real2sim-lstm"]
    seeds = [0, 1, 2, 3, 4]
    hidden = 32
    fc_width = 64

    [training.schedule]
    lr_da = 4e-4
    lr_task = 1e-3
    max_epochs = 150

    [evaluation]
    tasks = ["random_action", "crawl_obstructed"]
    workers = 1            # omit for one worker per core
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .adaptation.models import VARIANTS, ModelConfig
from .adaptation.trainer import TrainSchedule
from .robot.episode import CRAWL_OBSTRUCTED, RANDOM_ACTION
from .robot.kinematics import max_front_reach, rest_front_x
from .robot.physics import DomainConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RealDomain(_Strict):
    gain: Optional[list[float]] = None
    sensor_offset: Optional[list[float]] = None
    noise_sigma: Optional[float] = None
    tau_up: Optional[float] = None
    tau_down: Optional[float] = None
    hyst_beta: Optional[float] = None

    def overrides(self) -> dict:
        return {k: (tuple(v) if isinstance(v, list) else v)
                for k, v in self.model_dump().items() if v is not None}


class DatasetSection(_Strict):
    dataset_seed: int = 0
    n_random: int = Field(5, ge=2)
    n_crawl: int = Field(10, ge=2)
    n_test: int = Field(1, ge=1)
    random_duration_s: float = Field(300.0, gt=0)
    crawl_cycles: int = Field(20, ge=1)
    wall_x: float = 75.0
    wall_jitter: float = Field(1.5, ge=0)
    write_csv: bool = True
    real: RealDomain = RealDomain()

    @model_validator(mode="after")
    def _wall_reachable(self):
        lo, hi = rest_front_x(), max_front_reach()
        if not (lo < self.wall_x - self.wall_jitter and self.wall_x + self.wall_jitter < hi):
            raise ValueError(
                f"wall_x={self.wall_x}±{self.wall_jitter} mm must lie strictly between the resting "
                f"front-leg position {lo:.2f} mm and the maximum reach {hi:.2f} mm"
            )
        return self

    def real_domain(self) -> DomainConfig:
        return DomainConfig.synthetic_real(self.dataset_seed, **self.real.overrides())


class ScheduleSection(_Strict):
    da_steps_per_cycle: int = 5
    task_steps_per_cycle: int = 1
    lr_da: float = 4e-4
    lr_task: float = 1e-3
    weight_decay: float = 1e-6
    patience_epochs: int = 100
    max_epochs: int = 150
    chunk_len: int = 50
    batch_size: int = 16

    def build(self) -> TrainSchedule:
        return TrainSchedule(**self.model_dump())


class TrainingSection(_Strict):
    variants: list[str] = list(VARIANTS)
    seeds: list[int] = [0, 1, 2, 3, 4]
    hidden: int = Field(32, ge=1)
    fc_width: int = Field(64, ge=1)
    latent_dim: int = 5
    schedule: ScheduleSection = ScheduleSection()

    @field_validator("variants")
    @classmethod
    def _known(cls, v):
        bad = [x for x in v if x not in VARIANTS]
        if bad:
            raise ValueError(f"unknown variant(s) {bad}; valid: {', '.join(VARIANTS)}")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("seeds must be a non-empty list of distinct integers")
        return v

    @field_validator("latent_dim")
    @classmethod
    def _latent(cls, v):
        if v != 5:
            raise ValueError("the latent dimension is fixed at 5")
        return v

    def model(self) -> ModelConfig:
        return ModelConfig(self.hidden, self.fc_width, self.latent_dim)


class EvaluationSection(_Strict):
    tasks: list[str] = [RANDOM_ACTION, CRAWL_OBSTRUCTED]
    workers: Optional[int] = Field(None, ge=1)  # None: one per available core

    def pool_size(self) -> int:
        return self.workers or os.cpu_count() or 1

    @field_validator("tasks")
    @classmethod
    def _tasks(cls, v):
        bad = [x for x in v if x not in (RANDOM_ACTION, CRAWL_OBSTRUCTED)]
        if bad:
            raise ValueError(f"unknown evaluation task(s) {bad}")
        return v


class RunConfig(_Strict):
    dataset: DatasetSection = DatasetSection()
    training: TrainingSection = TrainingSection()
    evaluation: EvaluationSection = EvaluationSection()

    def canonical_json(self) -> str:
        """Settings that affect results (the worker count does not)."""
        d = self.model_dump()
        d["evaluation"].pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def parse_config(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
        cfg.training.schedule.build()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a TOML config; ``None`` gives the defaults."""
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        data = tomli.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
