"""
Loading, splitting, scaling and windowing of multivariate series.

CSV schema: a header row, then one row per time step. The first column is an
ISO-8601 timestamp (strictly increasing); every other column is numeric. The
forecast target is one of the named numeric columns, the rest are covariates.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterator

import numpy as np

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


class DataError(ValueError):
    pass


@dataclass
class SeriesTable:
    timestamps: np.ndarray  # datetime64[s]
    values: np.ndarray  # [T, N]
    columns: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if self.values.ndim != 2:
            raise DataError(f"values must be [T, N], got shape {self.values.shape}")
        if len(self.timestamps) != len(self.values):
            raise DataError("timestamps and values differ in length")
        if len(self.columns) != self.values.shape[1]:
            raise DataError(f"{len(self.columns)} column names for {self.values.shape[1]} columns")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not in {self.columns}") from None

    def rows(self, start: int, stop: int) -> "SeriesTable":
        return SeriesTable(self.timestamps[start:stop], self.values[start:stop], list(self.columns))

    def with_values(self, values: np.ndarray) -> "SeriesTable":
        return SeriesTable(self.timestamps, values, list(self.columns))


# -- CSV ----------------------------------------------------------------------


def load_csv(path, columns: list[str] | None = None, forward_fill: bool = False) -> SeriesTable:
    """Parse a CSV into a :class:`SeriesTable`.

    ``columns``, when given, must equal the numeric header names. Empty cells
    are an error unless ``forward_fill`` is set, in which case they take the
    previous row's value (a gap in the first row is always an error).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column and at least one value column")
        names = [h.strip() for h in header[1:]]
        if columns is not None and names != list(columns):
            raise DataError(f"{path}: header {names} does not match schema {list(columns)}")
        stamps, rows = [], []
        prev_row = None
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                ts = datetime.fromisoformat(rec[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad timestamp {rec[0]!r}") from None
            if ts.tzinfo is not None:
                ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
            row = []
            for col, cell in zip(names, rec[1:]):
                cell = cell.strip()
                if cell == "":
                    if forward_fill and prev_row is not None:
                        row.append(prev_row[len(row)])
                        continue
                    raise DataError(f"{path}:{lineno}: missing value in column {col!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric value {cell!r} in column {col!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: non-finite value {cell!r} in column {col!r}")
                row.append(v)
            if stamps and ts <= stamps[-1]:
                raise DataError(f"{path}:{lineno}: timestamp {rec[0]!r} not after previous row")
            stamps.append(ts)
            rows.append(row)
            prev_row = row
    logger.info("loaded %d rows x %d columns from %s", len(rows), len(names), path)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return SeriesTable(np.array(stamps, dtype="datetime64[s]"), values, names)


def write_csv(table: SeriesTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", *table.columns])
        for ts, row in zip(table.timestamps, table.values):
            w.writerow([str(ts), *(repr(float(v)) for v in row)])


# -- splitting and scaling ----------------------------------------------------


def split(
    table: SeriesTable,
    train: float = 0.7,
    val: float = 0.1,
    test: float = 0.2,
    min_length: int = 0,
) -> tuple[SeriesTable, SeriesTable, SeriesTable]:
    """Chronological split; train and val lengths are floored, test takes the rest."""
    fr = [Fraction(str(train)), Fraction(str(val)), Fraction(str(test))]
    if sum(fr) != 1 or any(f < 0 for f in fr):
        raise DataError(f"split fractions must be non-negative and sum to 1, got {train}, {val}, {test}")
    T = len(table)
    n_train = math.floor(fr[0] * T)
    n_val = math.floor(fr[1] * T)
    parts = (
        table.rows(0, n_train),
        table.rows(n_train, n_train + n_val),
        table.rows(n_train + n_val, T),
    )
    for name, part in zip(("train", "val", "test"), parts):
        if len(part) < min_length:
            raise DataError(f"{name} split has {len(part)} rows, fewer than S+P={min_length}")
    return parts


@dataclass
class Scaler:
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def fit(self, values: np.ndarray) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        if len(values) == 0:
            raise DataError("cannot fit scaler on an empty training split")
        self.mean = values.mean(axis=0)
        std = values.std(axis=0)
        low = std < SIGMA_FLOOR
        if low.any():
            logger.warning("zero-variance column(s) %s: std floored to %g", np.flatnonzero(low).tolist(), SIGMA_FLOOR)
        self.std = np.where(low, SIGMA_FLOOR, std)
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, values: np.ndarray, columns=None) -> np.ndarray:
        mean, std = self.mean, self.std
        if columns is not None:
            mean, std = mean[columns], std[columns]
        return np.asarray(values, dtype=np.float64) * std + mean


def fit_transform(scaler: Scaler, train: SeriesTable, *others: SeriesTable) -> list[SeriesTable]:
    """Fit on ``train`` only, then standardize ``train`` and every other split."""
    scaler.fit(train.values)
    return [t.with_values(scaler.transform(t.values)) for t in (train, *others)]


# -- windows ------------------------------------------------------------------


@dataclass
class WindowBatch:
    inputs: np.ndarray  # [B, S, N]
    targets: np.ndarray  # [B, P, N]
    starts: np.ndarray  # window start row of each sample


def window_starts(T: int, seq_len: int, pred_len: int) -> np.ndarray:
    if T < seq_len + pred_len:
        raise DataError(f"series length {T} < S+P = {seq_len + pred_len}")
    return np.arange(T - seq_len - pred_len + 1)


def make_windows(
    table: SeriesTable | np.ndarray,
    seq_len: int,
    pred_len: int,
    batch_size: int,
    shuffle_seed: int | None = None,
) -> Iterator[WindowBatch]:
    """Stride-1 windows in batches; shuffled iff ``shuffle_seed`` is given.

    The final partial batch is kept.
    """
    values = table.values if isinstance(table, SeriesTable) else np.asarray(table, dtype=np.float64)
    starts = window_starts(len(values), seq_len, pred_len)
    if shuffle_seed is not None:
        starts = np.random.default_rng(shuffle_seed).permutation(starts)
    offs_in = np.arange(seq_len)
    offs_out = np.arange(seq_len, seq_len + pred_len)
    for i in range(0, len(starts), batch_size):
        s = starts[i : i + batch_size]
        yield WindowBatch(values[s[:, None] + offs_in], values[s[:, None] + offs_out], s)


def count_windows(T: int, seq_len: int, pred_len: int) -> int:
    return max(T - seq_len - pred_len + 1, 0)


# -- synthetic data -----------------------------------------------------------


@dataclass
class SyntheticProfile:
    """Residential-load-like series sampled every ``step_minutes`` minutes."""

    base: float = 2.0
    daily_amp: float = 1.0
    weekly_amp: float = 0.4
    ar_coef: float = 0.7
    noise_std: float = 0.1
    spike_rate: float = 0.002
    spike_scale: float = 3.0
    covariates: bool = False
    step_minutes: int = 15
    start: str = "2020-10-25T00:00:00"

    @classmethod
    def from_config(cls, cfg) -> "SyntheticProfile":
        return cls(
            base=cfg.synthetic_base,
            daily_amp=cfg.synthetic_daily_amp,
            weekly_amp=cfg.synthetic_weekly_amp,
            ar_coef=cfg.synthetic_ar_coef,
            noise_std=cfg.synthetic_noise_std,
            spike_rate=cfg.synthetic_spike_rate,
            spike_scale=cfg.synthetic_spike_scale,
            covariates=cfg.synthetic_covariates,
        )

    @property
    def steps_per_day(self) -> int:
        return 24 * 60 // self.step_minutes


COVARIATE_NAMES = ["temperature", "humidity", "wind_speed", "wind_direction"]


def synthetic_components(profile: SyntheticProfile, T: int, seed: int) -> dict[str, np.ndarray]:
    """Smooth part, AR(1) noise, spikes and covariates of the synthetic load."""
    if T < 1000:
        raise DataError(f"synthetic series needs T >= 1000, got {T}")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)
    day = profile.steps_per_day
    week = 7 * day
    phase_d, phase_w = rng.uniform(0, 2 * np.pi, size=2)
    smooth = (
        profile.base
        + profile.daily_amp * np.sin(2 * np.pi * t / day + phase_d)
        + profile.weekly_amp * np.sin(2 * np.pi * t / week + phase_w)
    )
    eps = rng.normal(0.0, profile.noise_std, size=T)
    noise = np.empty(T)
    acc = 0.0
    for i in range(T):
        acc = profile.ar_coef * acc + eps[i]
        noise[i] = acc
    hits = rng.random(T) < profile.spike_rate
    spikes = np.where(hits, profile.spike_scale * profile.daily_amp * rng.uniform(1.0, 2.0, size=T), 0.0)
    out = {"smooth": smooth, "noise": noise, "spikes": spikes}
    if profile.covariates:
        covs = []
        for j in range(len(COVARIATE_NAMES)):
            ph = rng.uniform(0, 2 * np.pi)
            slow = np.sin(2 * np.pi * t / day + ph) + 0.5 * np.sin(2 * np.pi * t / (30 * day) + ph)
            covs.append(slow + rng.normal(0.0, 0.1, size=T))
        out["covariates"] = np.stack(covs, axis=1)
    return out


def generate_synthetic(profile: SyntheticProfile, T: int, seed: int) -> SeriesTable:
    parts = synthetic_components(profile, T, seed)
    load = parts["smooth"] + parts["noise"] + parts["spikes"]
    cols = ["load"]
    values = load[:, None]
    if "covariates" in parts:
        cols += COVARIATE_NAMES
        values = np.concatenate([values, parts["covariates"]], axis=1)
    start = np.datetime64(profile.start, "s")
    stamps = start + np.arange(T) * np.timedelta64(int(timedelta(minutes=profile.step_minutes).total_seconds()), "s")
    return SeriesTable(stamps, values, cols)
