from __future__ import annotations

import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import zlib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .ansatz import Variant
from .errors import ConfigError
from .usage import SynthProfile


class Settings(BaseModel):
    threads: int = 1
    log_level: str = "INFO"
    max_sites: int = 28
    out_dir: str = "results"

    @staticmethod
    def load() -> "Settings":
        load_dotenv()

        def _to_int(v: Optional[str], default: int) -> int:
            if v is None or not v.strip():
                return default
            try:
                return int(v)
            except ValueError:
                return default

        return Settings(
            threads=max(1, _to_int(os.getenv("NEGAWATT_THREADS"), 1)),
            log_level=os.getenv("NEGAWATT_LOG_LEVEL", "INFO").upper(),
            max_sites=_to_int(os.getenv("NEGAWATT_MAX_SITES"), 28),
            out_dir=os.getenv("NEGAWATT_OUT_DIR", "results"),
        )


settings = Settings.load()


DEFAULT_PERIODS = [0, 3, 6, 9, 12, 15, 18, 21]


class DataConfig(BaseModel):
    source: Literal["synth", "csv"] = "synth"
    csv_path: Optional[Path] = None
    days: int = Field(default=60, ge=2)
    hours_per_day: int = Field(default=24, ge=1)
    profile: SynthProfile = SynthProfile()

    @model_validator(mode="after")
    def _csv_needs_path(self) -> "DataConfig":
        if self.source == "csv" and self.csv_path is None:
            raise ValueError("data.csv_path is required when data.source = 'csv'")
        return self


class InstanceSettings(BaseModel):
    participants: int = Field(default=20, ge=1)
    requests: int = Field(default=5, ge=1)
    periods: List[int] = Field(default_factory=lambda: list(DEFAULT_PERIODS))
    period_length: int = Field(default=3, ge=1)
    # scalar, or per-hour table like {18 = 1.6}; hours not listed use p_proc_prime_default
    p_proc_prime: Union[float, Dict[int, float]] = 1.5
    p_proc_prime_default: float = 1.5
    delta: float = Field(default=0.2, ge=0.0)

    @model_validator(mode="after")
    def _requests_fit(self) -> "InstanceSettings":
        if self.requests > self.participants:
            raise ValueError("instance.requests must not exceed instance.participants")
        if not self.periods:
            raise ValueError("instance.periods must not be empty")
        return self

    def p_prime_for(self, t: int) -> float:
        if isinstance(self.p_proc_prime, dict):
            return float(self.p_proc_prime.get(t, self.p_proc_prime_default))
        return float(self.p_proc_prime)


class SolverSettings(BaseModel):
    variants: List[Variant] = Field(default_factory=lambda: list(Variant))
    levels: List[int] = Field(default_factory=lambda: [0, 1, 10])
    restarts: int = Field(default=5, ge=1)
    ladder_restarts: int = Field(default=1, ge=1)
    grad_tol: float = Field(default=1e-6, gt=0.0)
    max_evals: int = Field(default=20000, ge=1)
    fd_step: float = Field(default=1e-6, gt=0.0)
    gamma_scale: float = 1.0
    beta_scale: float = 1.0
    perturbation: float = Field(default=0.3, ge=0.0)

    @field_validator("levels")
    @classmethod
    def _levels_sorted(cls, v: List[int]) -> List[int]:
        if not v or any(p < 0 for p in v):
            raise ValueError("solver.levels must be a non-empty list of non-negative integers")
        return sorted(set(v))


class HFSettings(BaseModel):
    alpha: float = Field(default=0.5, gt=0.0, le=1.0)
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=500, ge=1)
    initial_density: Literal["uniform", "inverse-requests"] = "uniform"
    trace_alphas: List[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8])
    trace_periods: List[int] = Field(default_factory=lambda: [18])

    @field_validator("trace_alphas")
    @classmethod
    def _alphas_in_range(cls, v: List[float]) -> List[float]:
        if any(not (0.0 < a <= 1.0) for a in v):
            raise ValueError("hf.trace_alphas must lie in (0, 1]")
        return v


class ReportSettings(BaseModel):
    bins: int = Field(default=10, ge=1)


class RunConfig(BaseModel):
    seed: int = Field(ge=0)
    out_dir: Path = Path(settings.out_dir)
    data: DataConfig = DataConfig()
    instance: InstanceSettings = InstanceSettings()
    solver: SolverSettings = SolverSettings()
    hf: HFSettings = HFSettings()
    report: ReportSettings = ReportSettings()

    @model_validator(mode="after")
    def _periods_exist(self) -> "RunConfig":
        hours = self.data.hours_per_day
        for T in list(self.instance.periods) + list(self.hf.trace_periods):
            if T < 0 or T + self.instance.period_length > hours:
                raise ValueError(
                    f"period T={T} with {self.instance.period_length} member times "
                    f"does not fit in {hours} hourly slots"
                )
        return self


def load_run_config(
    path: Optional[Path],
    seed: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> RunConfig:
    """Read a TOML run file and apply CLI overrides.

    A missing path means "all defaults", which still needs a seed.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
    if seed is not None:
        raw["seed"] = seed
    if out_dir is not None:
        raw["out_dir"] = str(out_dir)
    if "seed" not in raw:
        raise ConfigError("a seed is mandatory (set `seed` in the config or pass --seed)")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(str(e)) from e

    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"output directory {cfg.out_dir} is not writable: {e}") from e
    if not os.access(cfg.out_dir, os.W_OK):
        raise ConfigError(f"output directory {cfg.out_dir} is not writable")
    return cfg


def sub_rng(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for a named stream, e.g. sub_rng(7, "restarts", 2, 18, 1)."""
    entropy = [int(seed), zlib.crc32(name.encode("utf-8"))] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
