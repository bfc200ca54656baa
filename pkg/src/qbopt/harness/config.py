"""Scenario configuration: a YAML document validated against a strict schema.

Unknown keys anywhere are errors.  Minimal example::

    system: bose-hubbard
    fom: fidelity
    optimizer: bo
    bo: {n_init: 100, m_iters: 500}
    repeats: 30
    seed: 0
    output_dir: runs/bh
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SYSTEMS = ("bose-hubbard", "rydberg-1d", "rydberg-2d", "rydberg-3d")
GEOMETRY = {"rydberg-1d": "chain-9", "rydberg-2d": "square-3x3", "rydberg-3d": "cube-2x2x2"}


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoSettings(_Strict):
    n_init: int = Field(100, ge=1)
    m_iters: int = Field(500, ge=0)
    refit_every: int = Field(10, ge=1)
    acquisition: Literal["UCB", "EI"] = "UCB"
    ucb_k_start: float = Field(5.0, ge=0)
    ucb_k_end: float = Field(0.0, ge=0)
    n_probe: int = Field(1024, ge=1)
    n_refine: int = Field(8, ge=0)
    refine_maxfev: int = Field(100, ge=1)
    fit_restarts: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _schedule(self):
        if self.acquisition == "UCB" and self.ucb_k_start < self.ucb_k_end:
            raise ValueError("UCB schedule needs ucb_k_start >= ucb_k_end")
        return self

    @property
    def budget(self) -> int:
        return self.n_init + self.m_iters


class BaselineSettings(_Strict):
    budget: int = Field(500, ge=1)
    spsa_alpha: float = 0.602
    spsa_gamma: float = 0.101
    spsa_c: float = 0.1
    spsa_a: Optional[float] = None
    nm_initial_edge: float = Field(0.05, gt=0, le=1)
    de_popsize: int = Field(15, ge=1)
    de_mutation: float = 0.8
    de_crossover: float = Field(0.9, ge=0, le=1)


class BoseHubbardSettings(_Strict):
    sites: int = Field(5, ge=1)
    bosons: int = Field(5, ge=0)
    steps: int = Field(400, ge=1)
    shots: int = Field(1000, ge=2)
    qsl_grid: int = Field(101, ge=51)


class RydbergSettings(_Strict):
    tolerance: float = Field(1e-7, gt=0)
    target: Optional[int] = Field(None, ge=0)
    detection_prob: float = Field(1.0, ge=0, le=1)
    fill_prob: float = Field(1.0, ge=0, le=1)
    pulse_noise: float = Field(0.0, ge=0)
    taper: float = Field(0.2, gt=0, le=1)
    eval_realizations: int = Field(50, ge=1)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    system: Literal["bose-hubbard", "rydberg-1d", "rydberg-2d", "rydberg-3d"]
    fom: Literal["fidelity", "fexp", "manifold", "detected-count"]
    optimizer: Literal["bo", "spsa", "nm", "de", "random"] = "bo"
    bo: BoSettings = BoSettings()
    baseline: BaselineSettings = BaselineSettings()
    protocol_time_factor: float = Field(1.0, gt=0)
    bose_hubbard: BoseHubbardSettings = BoseHubbardSettings()
    rydberg: RydbergSettings = RydbergSettings()
    repeats: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**63)
    output_dir: str = "runs/scenario"
    workers: int = Field(1, ge=1)
    record_wall_time: bool = True

    @model_validator(mode="after")
    def _combination(self):
        bh = self.system == "bose-hubbard"
        if bh and self.fom not in ("fidelity", "fexp"):
            raise ValueError(f"fom {self.fom!r} is not available for bose-hubbard")
        if not bh and self.fom not in ("manifold", "detected-count"):
            raise ValueError(f"fom {self.fom!r} is only available for bose-hubbard")
        return self

    @property
    def budget(self) -> int:
        return self.bo.budget if self.optimizer == "bo" else self.baseline.budget

    @property
    def geometry(self) -> str | None:
        return GEOMETRY.get(self.system)

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def content_hash(self) -> str:
        """Git-style blob hash (SHA-1 of 'blob <len>\\0' + canonical JSON) of the configuration."""
        body = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with top-level fields replaced; nested sections given as dicts are merged key by key."""
        data = self.canonical()
        for k, v in changes.items():
            if v is None:
                continue
            data[k] = {**data[k], **v} if isinstance(v, dict) and isinstance(data.get(k), dict) else v
        return parse_config(data)


def parse_config(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario document must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(data)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.canonical(), sort_keys=False)
