from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import DataError

logger = logging.getLogger("negawatt.usage")

_PARTICIPANT_COLUMN = re.compile(r"^p(\d+)$")


@dataclass
class UsageRecords:
    """Energy per slot (kWh), usage[d, t, l] for day d, slot t, participant l."""

    usage: np.ndarray
    days: List[pd.Timestamp]
    hours_per_day: int = 24

    def __post_init__(self):
        self.usage = np.asarray(self.usage, dtype=float)
        if self.usage.ndim != 3:
            raise DataError("usage must be a days x slots x participants array")
        if self.usage.shape[1] != self.hours_per_day:
            raise DataError(f"expected {self.hours_per_day} slots per day, got {self.usage.shape[1]}")
        if len(self.days) != self.usage.shape[0]:
            raise DataError("one date per day of usage is required")
        if np.any(self.usage < 0) or not np.all(np.isfinite(self.usage)):
            raise DataError("usage values must be finite and non-negative")

    @property
    def participants(self) -> int:
        return int(self.usage.shape[2])

    @property
    def n_days(self) -> int:
        return int(self.usage.shape[0])

    def to_frame(self) -> pd.DataFrame:
        minutes = 24 * 60 // self.hours_per_day
        rows = []
        for d, day in enumerate(self.days):
            for t in range(self.hours_per_day):
                stamp = pd.Timestamp(day) + pd.Timedelta(minutes=t * minutes)
                rows.append([stamp.strftime("%Y-%m-%dT%H:%M:%S")] + self.usage[d, t].tolist())
        columns = ["datetime"] + [f"p{l + 1}" for l in range(self.participants)]
        return pd.DataFrame(rows, columns=columns)


class SynthProfile(BaseModel):
    """Knobs of the synthetic household generator (kWh per hourly slot)."""

    base: float = Field(default=0.18, ge=0.0)
    morning_peak: float = Field(default=0.25, ge=0.0)
    morning_hour: float = 7.5
    evening_peak: float = Field(default=0.45, ge=0.0)
    evening_hour: float = 19.0
    peak_width: float = Field(default=1.6, gt=0.0)
    scale_spread: float = Field(default=0.35, ge=0.0)
    noise: float = Field(default=0.05, ge=0.0)
    evening_noise_boost: float = Field(default=3.0, ge=0.0)
    evening_hours: Tuple[int, int] = (17, 22)
    shared_factor: float = Field(default=0.6, ge=0.0, le=1.0)


def synth_usage(
    seed: int,
    L: int,
    days: int,
    profile: Optional[SynthProfile] = None,
    rng: Optional[np.random.Generator] = None,
    hours_per_day: int = 24,
    start: str = "2024-01-01",
) -> UsageRecords:
    """Seeded household-like usage: base + morning/evening peaks, scaled per
    participant, plus noise that is larger in the evening and partly shared
    between participants (loadings of both signs)."""
    if days < 2:
        raise ValueError("at least 2 days are needed to estimate covariances")
    if L < 1:
        raise ValueError("participant count must be positive")
    profile = profile or SynthProfile()
    rng = rng if rng is not None else np.random.default_rng(seed)

    hours = np.arange(hours_per_day) * (24.0 / hours_per_day)
    shape = (
        profile.base
        + profile.morning_peak * np.exp(-0.5 * ((hours - profile.morning_hour) / profile.peak_width) ** 2)
        + profile.evening_peak * np.exp(-0.5 * ((hours - profile.evening_hour) / profile.peak_width) ** 2)
    )
    scales = rng.lognormal(mean=0.0, sigma=profile.scale_spread, size=L)
    loadings = rng.uniform(-1.0, 1.0, size=L)

    lo, hi = profile.evening_hours
    noise_sd = np.full(hours_per_day, profile.noise)
    noise_sd[(hours >= lo) & (hours <= hi)] *= 1.0 + profile.evening_noise_boost

    own = rng.standard_normal((days, hours_per_day, L))
    shared = rng.standard_normal((days, hours_per_day, 1))
    w = profile.shared_factor
    mixed = np.sqrt(1.0 - w**2) * own + w * shared * loadings[None, None, :]
    usage = shape[None, :, None] * scales[None, None, :] + noise_sd[None, :, None] * scales[None, None, :] * mixed
    usage = np.clip(usage, 0.0, None)

    first = pd.Timestamp(start)
    day_list = [first + pd.Timedelta(days=d) for d in range(days)]
    logger.info("Synthesized %d days x %d slots for %d participants (seed=%s)", days, hours_per_day, L, seed)
    return UsageRecords(usage=usage, days=day_list, hours_per_day=hours_per_day)


def read_usage_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype={"datetime": str}, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataError(f"usage file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse usage file {path}: {e}") from e


def ingest_usage_csv(path: Path, hours_per_day: int = 24) -> UsageRecords:
    """Read `datetime,p1,...,pL`, one row per (day, slot), into validated records."""
    df = read_usage_frame(Path(path))
    if not len(df.columns) or df.columns[0] != "datetime":
        raise DataError("first column of the usage file must be 'datetime'")
    participant_cols = list(df.columns[1:])
    for i, col in enumerate(participant_cols):
        m = _PARTICIPANT_COLUMN.match(str(col))
        if not m or int(m.group(1)) != i + 1:
            raise DataError(f"unexpected participant column '{col}', expected 'p{i + 1}'")
    if not participant_cols:
        raise DataError("usage file has no participant columns")

    # header is line 1, so data row i sits on line i + 2
    for col in df.columns:
        missing = df[col].isna().to_numpy().nonzero()[0]
        if len(missing):
            raise DataError(f"missing value at row {int(missing[0]) + 2}, column '{col}'")
    values = df[participant_cols].apply(pd.to_numeric, errors="coerce")
    bad = np.argwhere(values.isna().to_numpy())
    if len(bad):
        r, c = bad[0]
        raise DataError(f"non-numeric value at row {int(r) + 2}, column '{participant_cols[c]}'")
    neg = np.argwhere(values.to_numpy() < 0)
    if len(neg):
        r, c = neg[0]
        raise DataError(f"negative usage at row {int(r) + 2}, column '{participant_cols[c]}'")

    stamps = pd.to_datetime(df["datetime"], format="ISO8601", errors="coerce")
    if stamps.isna().any():
        r = int(stamps.isna().to_numpy().nonzero()[0][0])
        raise DataError(f"unparseable timestamp at row {r + 2}, column 'datetime'")

    minutes_per_slot = 24 * 60 // hours_per_day
    slot = (stamps.dt.hour * 60 + stamps.dt.minute) // minutes_per_slot
    day = stamps.dt.normalize()
    frame = values.assign(_day=day.to_numpy(), _slot=slot.to_numpy())
    if frame.duplicated(subset=["_day", "_slot"]).any():
        r = int(frame.duplicated(subset=["_day", "_slot"]).to_numpy().nonzero()[0][0])
        raise DataError(f"duplicate slot at row {r + 2}")

    day_list = sorted(frame["_day"].unique())
    counts = frame.groupby("_day")["_slot"].nunique()
    ragged = counts[counts != hours_per_day]
    if len(ragged):
        raise DataError(
            f"day {pd.Timestamp(ragged.index[0]).date()} has {int(ragged.iloc[0])} slots, expected {hours_per_day}"
        )

    frame = frame.sort_values(["_day", "_slot"])
    usage = frame[participant_cols].to_numpy(dtype=float).reshape(len(day_list), hours_per_day, len(participant_cols))
    logger.info("Ingested %s: %d days, %d participants", path, len(day_list), len(participant_cols))
    return UsageRecords(usage=usage, days=[pd.Timestamp(d) for d in day_list], hours_per_day=hours_per_day)


def write_usage(records: UsageRecords, output_path: Path, output_format: str = "csv") -> None:
    df = records.to_frame()
    output_format = output_format.lower()
    if output_format == "csv":
        df.to_csv(output_path, index=False, float_format="%.17g", lineterminator="\n")
    elif output_format in {"parquet", "pq"}:
        # Requires pyarrow
        df.to_parquet(output_path, index=False)
    else:
        raise ValueError(f"Unsupported output format: {output_format}")
