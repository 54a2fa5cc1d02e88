"""
Dominant-period extraction and 1D <-> 2D folding of time series.

A window ``x[B, S, N]`` is transformed along time, magnitudes are averaged
over batch and variates, and the strongest non-zero frequencies give the
periods. A series is folded for a period ``p`` and cycle count ``f`` into a
``[B, p, f, N]`` grid where rows index the position inside a cycle and
columns index the cycle, zero-padded after the last valid sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, as_tensor, pad_zeros

MIN_SEQUENCE_LENGTH = 4
MAGNITUDE_FLOOR = 1e-9
_MAX_FOLD = 2**31


class NoPeriodicityError(ValueError):
    """The input has no usable non-zero frequency (e.g. a constant series)."""


@dataclass(frozen=True)
class Spectrum:
    magnitudes: np.ndarray  # length S//2 + 1, index = cycles per window
    sequence_length: int


@dataclass(frozen=True)
class PeriodEntry:
    frequency: int
    period: int
    amplitude: float


@dataclass(frozen=True)
class PeriodSet:
    entries: tuple[PeriodEntry, ...]
    sequence_length: int

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> PeriodEntry:
        return self.entries[i]

    @property
    def periods(self) -> list[int]:
        return [e.period for e in self.entries]

    @property
    def frequencies(self) -> list[int]:
        return [e.frequency for e in self.entries]


@dataclass
class Folded2D:
    tensor: Tensor  # [B, p, f, N]
    valid_length: int

    @property
    def period(self) -> int:
        return self.tensor.shape[1]

    @property
    def cycles(self) -> int:
        return self.tensor.shape[2]


def compute_spectrum(x) -> Spectrum:
    """Magnitude spectrum of ``x[B, S, N]`` along S, averaged over B and N."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected [B, S, N] input, got shape {arr.shape}")
    S = arr.shape[1]
    if S < MIN_SEQUENCE_LENGTH:
        raise ValueError(f"sequence length {S} < {MIN_SEQUENCE_LENGTH}")
    mags = np.abs(np.fft.rfft(arr, axis=1)).mean(axis=(0, 2))
    return Spectrum(magnitudes=mags, sequence_length=S)


def top_k_periods(spec: Spectrum, k: int) -> PeriodSet:
    """The ``k`` strongest frequencies in 1..S//2 with their integer periods.

    Equal amplitudes (to 12 significant digits) prefer the lower frequency.
    Fewer than ``k`` entries come back when fewer frequencies clear the
    magnitude floor.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    S = spec.sequence_length
    mags = np.asarray(spec.magnitudes)
    freqs = np.arange(1, S // 2 + 1)
    amps = mags[1 : S // 2 + 1]
    usable = amps > MAGNITUDE_FLOOR
    if not usable.any():
        raise NoPeriodicityError("no non-zero frequency above the magnitude floor (constant input?)")
    freqs, amps = freqs[usable], amps[usable]
    key = np.array([float(f"{a:.12g}") for a in amps])
    order = np.lexsort((freqs, -key))[:k]
    entries = tuple(
        PeriodEntry(frequency=int(freqs[i]), period=math.ceil(S / int(freqs[i])), amplitude=float(amps[i]))
        for i in order
    )
    return PeriodSet(entries=entries, sequence_length=S)


def detect_periods(x, k: int) -> PeriodSet:
    return top_k_periods(compute_spectrum(x), k)


def fold(x, entry: PeriodEntry) -> Folded2D:
    """Fold ``x[B, S, N]`` into ``[B, period, frequency, N]``.

    Element ``[b, t, c, n]`` is ``x[b, c * period + t, n]``; positions past S
    are zero. Differentiable.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"expected [B, S, N] input, got shape {x.shape}")
    B, S, N = x.shape
    p, f = int(entry.period), int(entry.frequency)
    if p < 1 or f < 1:
        raise ValueError(f"period and frequency must be positive, got p={p}, f={f}")
    if p * f > _MAX_FOLD:
        raise OverflowError(f"fold size {p}*{f} too large")
    if p * f < S:
        raise ValueError(f"period {p} x cycles {f} = {p * f} does not cover S={S}")
    padded = pad_zeros(x, p * f, axis=1)
    grid = padded.reshape(B, f, p, N).permute(0, 2, 1, 3)
    return Folded2D(tensor=grid, valid_length=S)


def unfold(folded: Folded2D) -> Tensor:
    """Inverse of :func:`fold` on the first ``valid_length`` positions."""
    t = folded.tensor
    B, p, f, N = t.shape
    flat = t.permute(0, 2, 1, 3).reshape(B, p * f, N)
    return flat.slice(1, 0, folded.valid_length)


@dataclass
class PeriodDump:
    """Appends one line per forward pass: ``pass frequency period amplitude`` triples."""

    path: Path
    _count: int = field(default=0, init=False)

    def __post_init__(self):
        self.path = Path(self.path)
        self.path.write_text("# pass\tfrequency\tperiod\tamplitude\n")

    def __call__(self, periods: PeriodSet) -> None:
        with self.path.open("a") as fh:
            for e in periods:
                fh.write(f"{self._count}\t{e.frequency}\t{e.period}\t{e.amplitude:.10g}\n")
        self._count += 1
