"""
Run configuration: one flat record of architecture, data and training settings.

The on-disk form is ``key = value`` lines; ``#`` starts a comment. Values are
parsed according to the field's type and unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class Config:
    # data
    data: str = ""  # CSV path; empty -> synthetic
    target: str = "load"
    forward_fill: bool = False
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    synthetic_T: int = 20000
    synthetic_covariates: bool = False
    synthetic_base: float = 2.0
    synthetic_daily_amp: float = 1.0
    synthetic_weekly_amp: float = 0.4
    synthetic_ar_coef: float = 0.7
    synthetic_noise_std: float = 0.1
    synthetic_spike_rate: float = 0.002
    synthetic_spike_scale: float = 3.0
    # architecture
    model: str = "spdnet"
    seq_len: int = 96
    pred_len: int = 24
    top_k: int = 3
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    trend_kernel: int = 25
    seasonal_kernel: int = 7
    activation: str = "gelu"
    # training
    seed: int = 42
    batch_size: int = 32
    lr: float = 1e-3
    max_epochs: int = 50
    patience: int = 5
    max_train_batches: int = 0  # 0 -> every batch each epoch
    # benchmark
    bench_epochs: int = 3
    bench_warmup: int = 1

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, base: "Config | None" = None) -> "Config":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse(val, types[key], key, lineno)
        return dataclasses.replace(base or cls(), **values)

    @classmethod
    def load(cls, path) -> "Config":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(val: str, typ, key: str, lineno: int):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = val.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(val)
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        return val
    except ValueError:
        raise ValueError(f"config line {lineno}: {key} expects {typ}, got {val!r}") from None
