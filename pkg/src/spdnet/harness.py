"""
Training, evaluation, baselines and per-epoch timing.

Losses and metrics are computed on standardized values. Training minimizes
MSE over every variate; reported MSE/MAE are for the target column.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError, Parameter, Tensor, as_tensor, mse_loss, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .data import (
    Scaler,
    SeriesTable,
    SyntheticProfile,
    fit_transform,
    generate_synthetic,
    load_csv,
    make_windows,
    split,
)
from .nn import Module, init_uniform
from .optim import Adam
from .pdm import SPDNet

logger = logging.getLogger(__name__)

SCALER_PREFIX = "__scaler__."


class TrainingDiverged(RuntimeError):
    pass


# -- baselines ------------------------------------------------------------------


def baseline_persistence(inputs: np.ndarray, pred_len: int) -> np.ndarray:
    """Repeat the last observed step ``pred_len`` times: [B, S, N] -> [B, P, N]."""
    inputs = np.asarray(inputs, dtype=np.float64)
    return np.repeat(inputs[:, -1:, :], pred_len, axis=1)


class Persistence(Module):
    def __init__(self, seq_len: int, pred_len: int, n_vars: int):
        self.seq_len, self.pred_len, self.n_vars = seq_len, pred_len, n_vars

    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        return Tensor(baseline_persistence(x.data, self.pred_len))


class LinearBaseline(Module):
    """One learnable S -> P linear map (with bias) per variate."""

    def __init__(self, seq_len: int, pred_len: int, n_vars: int, seed: int = 42):
        rng = np.random.default_rng(seed)
        self.seq_len, self.pred_len, self.n_vars = seq_len, pred_len, n_vars
        self.weight = Parameter(init_uniform(rng, (n_vars, seq_len, pred_len), seq_len))
        self.bias = Parameter(np.zeros((n_vars, 1, pred_len)))

    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        B = x.shape[0]
        series = x.permute(0, 2, 1).reshape(B, self.n_vars, 1, self.seq_len)
        out = (series @ self.weight + self.bias).reshape(B, self.n_vars, self.pred_len)
        return out.permute(0, 2, 1)


MODELS = ("spdnet", "linear", "persistence")


def build_model(cfg: Config, n_vars: int) -> Module:
    if cfg.model == "spdnet":
        return SPDNet.from_config(cfg, n_vars)
    if cfg.model == "linear":
        return LinearBaseline(cfg.seq_len, cfg.pred_len, n_vars, seed=cfg.seed)
    if cfg.model == "persistence":
        return Persistence(cfg.seq_len, cfg.pred_len, n_vars)
    raise ValueError(f"unknown model {cfg.model!r}; choose from {MODELS}")


# -- data -----------------------------------------------------------------------


@dataclass
class PreparedData:
    raw: SeriesTable
    train: SeriesTable
    val: SeriesTable
    test: SeriesTable
    scaler: Scaler
    target_index: int

    def get(self, name: str) -> SeriesTable:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def load_table(cfg: Config) -> SeriesTable:
    if cfg.data:
        return load_csv(cfg.data, forward_fill=cfg.forward_fill)
    return generate_synthetic(SyntheticProfile.from_config(cfg), cfg.synthetic_T, cfg.seed)


def prepare_data(cfg: Config, table: SeriesTable | None = None) -> PreparedData:
    raw = table if table is not None else load_table(cfg)
    tr, va, te = split(raw, cfg.train_frac, cfg.val_frac, cfg.test_frac, min_length=cfg.seq_len + cfg.pred_len)
    scaler = Scaler()
    tr, va, te = fit_transform(scaler, tr, va, te)
    return PreparedData(raw, tr, va, te, scaler, raw.column_index(cfg.target))


# -- metrics --------------------------------------------------------------------


@dataclass
class Metrics:
    mse: float
    mae: float
    n_windows: int
    step_mse: np.ndarray  # per horizon step


def metrics_from_predictions(pred: np.ndarray, target: np.ndarray) -> Metrics:
    """MSE/MAE over every element of ``[W, P]`` (or ``[W, P, ...]``) arrays."""
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    err = pred - target
    axes = tuple(i for i in range(err.ndim) if i != 1)
    return Metrics(
        mse=float(np.mean(err * err)),
        mae=float(np.mean(np.abs(err))),
        n_windows=err.shape[0],
        step_mse=np.mean(err * err, axis=axes),
    )


def predict_table(model: Module, table: SeriesTable, cfg: Config) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forecasts for every window of ``table`` in order: (pred, target, starts), all variates."""
    preds, targets, starts = [], [], []
    with no_grad():
        for batch in make_windows(table, cfg.seq_len, cfg.pred_len, cfg.batch_size):
            preds.append(model(batch.inputs).data)
            targets.append(batch.targets)
            starts.append(batch.starts)
    return np.concatenate(preds), np.concatenate(targets), np.concatenate(starts)


def evaluate_model(model: Module, table: SeriesTable, cfg: Config, target_index: int) -> Metrics:
    pred, target, _ = predict_table(model, table, cfg)
    return metrics_from_predictions(pred[:, :, target_index], target[:, :, target_index])


# -- training -------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float
    seconds: float


@dataclass
class TrainRun:
    config: Config
    model: Module
    data: PreparedData
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint: Path | None = None

    @property
    def best_val_mse(self) -> float:
        return min((e.val_mse for e in self.epochs), default=float("nan"))

    def log_text(self) -> str:
        buf = io.StringIO()
        buf.write("# config\n")
        buf.write("".join(f"# {line}\n" for line in self.config.to_text().splitlines()))
        buf.write("epoch\ttrain_loss\tval_mse\tval_mae\tseconds\n")
        for e in self.epochs:
            buf.write(f"{e.epoch}\t{e.train_loss:.6g}\t{e.val_mse:.6g}\t{e.val_mae:.6g}\t{e.seconds:.3f}\n")
        buf.write(f"best_epoch\t{self.best_epoch}\n")
        return buf.getvalue()


def model_arrays(model: Module, scaler: Scaler) -> dict[str, np.ndarray]:
    arrays = model.state_dict()
    arrays[SCALER_PREFIX + "mean"] = scaler.mean
    arrays[SCALER_PREFIX + "std"] = scaler.std
    return arrays


def _dump_divergence(path: Path | None, epoch: int, batch: int, losses: list[float], model: Module) -> None:
    lines = [f"diverged at epoch {epoch}, batch {batch}", f"recent losses: {losses[-10:]}"]
    for name, p in model.named_parameters():
        finite = bool(np.isfinite(p.data).all())
        lines.append(f"{name}\tshape={p.shape}\tnorm={np.linalg.norm(p.data):.6g}\tfinite={finite}")
    text = "\n".join(lines) + "\n"
    logger.error(text)
    if path is not None:
        path.write_text(text)


def train(cfg: Config, data: PreparedData | None = None, checkpoint_path=None) -> TrainRun:
    """Fit ``cfg.model`` with Adam on MSE, early-stopping on validation MSE.

    The parameters of the best validation epoch are restored before
    returning and, if ``checkpoint_path`` is given, written there.
    """
    data = data or prepare_data(cfg)
    model = build_model(cfg, data.train.n_vars)
    run = TrainRun(cfg, model, data)
    params = model.parameters()
    dump_path = Path(checkpoint_path).with_suffix(".diverged.txt") if checkpoint_path else None

    if params:
        opt = Adam(params, lr=cfg.lr)
        best_state, best_mse, stale = None, float("inf"), 0
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            losses: list[float] = []
            batches = make_windows(data.train, cfg.seq_len, cfg.pred_len, cfg.batch_size, shuffle_seed=cfg.seed + epoch)
            for bi, batch in enumerate(batches):
                if cfg.max_train_batches and bi >= cfg.max_train_batches:
                    break
                try:
                    loss = mse_loss(model(batch.inputs), batch.targets)
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    if not all(np.isfinite(p.data).all() for p in params):
                        raise NonFiniteError("parameters became non-finite")
                except NonFiniteError as exc:
                    _dump_divergence(dump_path, epoch, bi, losses, model)
                    raise TrainingDiverged(f"training diverged at epoch {epoch}, batch {bi}: {exc}") from exc
                losses.append(loss.item())
            val = evaluate_model(model, data.val, cfg, data.target_index)
            rec = EpochRecord(epoch, float(np.mean(losses)), val.mse, val.mae, time.perf_counter() - t0)
            run.epochs.append(rec)
            logger.info("epoch %d train %.5f val_mse %.5f val_mae %.5f (%.1fs)", *vars(rec).values())
            if val.mse < best_mse:
                best_mse, best_state, stale = val.mse, model.state_dict(), 0
                run.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        model.load_state_dict(best_state)

    if checkpoint_path is not None:
        checkpoint_path = Path(checkpoint_path)
        save_checkpoint(checkpoint_path, model_arrays(model, data.scaler), cfg.to_text())
        checkpoint_path.with_suffix(".log").write_text(run.log_text())
        run.checkpoint = checkpoint_path
    return run


def load_model(checkpoint_path, data: PreparedData | None = None) -> tuple[Module, Config, Scaler, PreparedData]:
    arrays, meta = load_checkpoint(checkpoint_path)
    cfg = Config.from_text(meta)
    data = data or prepare_data(cfg)
    scaler = Scaler(arrays.pop(SCALER_PREFIX + "mean"), arrays.pop(SCALER_PREFIX + "std"))
    model = build_model(cfg, data.train.n_vars)
    model.load_state_dict(arrays)
    if not (np.array_equal(scaler.mean, data.scaler.mean) and np.array_equal(scaler.std, data.scaler.std)):
        logger.warning("scaler stored in %s differs from one refit on the data", checkpoint_path)
    return model, cfg, scaler, data


# -- evaluation reports ---------------------------------------------------------


@dataclass
class MetricsRow:
    model: str
    seq_len: int
    pred_len: int
    split: str
    mse: float
    mae: float
    n_windows: int


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    config: Config | None = None

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            if self.config is not None:
                for line in self.config.to_text().splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["model", "S", "P", "split", "mse", "mae", "n_windows"])
            for r in self.rows:
                w.writerow([r.model, r.seq_len, r.pred_len, r.split, repr(r.mse), repr(r.mae), r.n_windows])


def evaluate(checkpoint_path, split_name: str = "test", data: PreparedData | None = None) -> MetricsReport:
    model, cfg, _, data = load_model(checkpoint_path, data)
    m = evaluate_model(model, data.get(split_name), cfg, data.target_index)
    row = MetricsRow(cfg.model, cfg.seq_len, cfg.pred_len, split_name, m.mse, m.mae, m.n_windows)
    return MetricsReport([row], cfg)


def write_predictions(checkpoint_path, path, split_name: str = "test", data: PreparedData | None = None) -> int:
    """Write un-normalized target forecasts as ``timestamp,horizon_step,predicted,actual``."""
    model, cfg, scaler, data = load_model(checkpoint_path, data)
    table = data.get(split_name)
    ti = data.target_index
    pred, target, starts = predict_table(model, table, cfg)
    pred = scaler.inverse_transform(pred[:, :, ti], ti)
    actual = scaler.inverse_transform(target[:, :, ti], ti)
    n = 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "horizon_step", "predicted", "actual"])
        for wi, s in enumerate(starts):
            for h in range(cfg.pred_len):
                ts = table.timestamps[s + cfg.seq_len + h]
                w.writerow([str(ts), h + 1, repr(float(pred[wi, h])), repr(float(actual[wi, h]))])
                n += 1
    return n


# -- timing ---------------------------------------------------------------------


@dataclass
class StepCounters:
    forward: int = 0
    backward: int = 0
    step: int = 0
    batches_built_while_timed: int = 0


@dataclass
class TimingRow:
    pred_len: int
    seconds_per_epoch: float
    epochs: int
    batches_per_epoch: int
    counters: StepCounters


def benchmark(cfg: Config, horizons: list[int], data_table: SeriesTable | None = None) -> list[TimingRow]:
    """Mean wall-seconds per training epoch for each horizon.

    Batches are materialized before the clock starts; only forward, backward
    and optimizer step run inside the timed region. ``cfg.bench_warmup``
    untimed epochs precede ``cfg.bench_epochs`` timed ones.
    """
    if not horizons:
        raise ValueError("benchmark needs at least one horizon")
    table = data_table if data_table is not None else load_table(cfg)
    rows = []
    for P in horizons:
        pcfg = cfg.replace(pred_len=P)
        data = prepare_data(pcfg, table)
        model = build_model(pcfg, data.train.n_vars)
        params = model.parameters()
        opt = Adam(params, lr=pcfg.lr) if params else None
        counters = StepCounters()
        clock = {"timed": False}

        def counted(gen):
            for batch in gen:
                if clock["timed"]:
                    counters.batches_built_while_timed += 1
                yield batch

        epochs = []
        for e in range(pcfg.bench_warmup + pcfg.bench_epochs):
            batches = list(
                counted(make_windows(data.train, pcfg.seq_len, P, pcfg.batch_size, shuffle_seed=pcfg.seed + e))
            )
            if pcfg.max_train_batches:
                batches = batches[: pcfg.max_train_batches]
            epochs.append(batches)
        durations = []
        for e, batches in enumerate(epochs):
            timed = e >= pcfg.bench_warmup
            clock["timed"] = timed
            t0 = time.perf_counter()
            for batch in batches:
                loss = mse_loss(model(batch.inputs), batch.targets)
                if opt is not None:
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                if timed:
                    counters.forward += 1
                    counters.backward += opt is not None
                    counters.step += opt is not None
            if timed:
                durations.append(time.perf_counter() - t0)
            clock["timed"] = False
        rows.append(TimingRow(P, float(np.mean(durations)), len(durations), len(epochs[0]), counters))
    return rows


def write_timing_csv(rows: list[TimingRow], path, cfg: Config | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if cfg is not None:
            for line in cfg.to_text().splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["P", "seconds_per_epoch", "epochs", "batches_per_epoch"])
        for r in rows:
            w.writerow([r.pred_len, f"{r.seconds_per_epoch:.6f}", r.epochs, r.batches_per_epoch])
