"""Command-line entry point: ``spdnet <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import Config
from .data import SyntheticProfile, generate_synthetic, write_csv
from .harness import (
    MODELS,
    MetricsReport,
    benchmark,
    evaluate,
    load_table,
    prepare_data,
    train,
    write_predictions,
    write_timing_csv,
)
from .spectral import NoPeriodicityError, detect_periods

logger = logging.getLogger("spdnet")


def _horizons(text: str) -> list[int]:
    try:
        hs = [int(h) for h in text.split(",") if h.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--horizons expects comma-separated integers, got {text!r}") from None
    if not hs or any(h < 1 for h in hs):
        raise argparse.ArgumentTypeError("--horizons needs positive integers")
    return hs


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--data", help="CSV file (default: synthetic series)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    common.add_argument("--horizons", type=_horizons, help="comma-separated prediction lengths")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spdnet", description="SPDNet load forecasting")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("train", parents=[common], help="train one model per horizon")
    sub.add_parser("evaluate", parents=[common], help="MSE/MAE of trained checkpoints")
    p = sub.add_parser("predict", parents=[common], help="write test-split forecasts as CSV")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    sub.add_parser("benchmark", parents=[common], help="training seconds per epoch for each horizon")
    sub.add_parser("generate-data", parents=[common], help="write a synthetic load CSV")
    p = sub.add_parser("inspect-periods", parents=[common], help="print dominant periods of one window")
    p.add_argument("--start", type=int, default=0, help="first row of the window")
    p.add_argument("--k", type=int, help="number of periods (default: top_k)")
    return parser


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.data is not None:
        over["data"] = args.data
    if args.model is not None:
        over["model"] = args.model
    return cfg.replace(**over)


def checkpoint_name(cfg: Config) -> str:
    return f"{cfg.model}_S{cfg.seq_len}_P{cfg.pred_len}.ckpt"


def cmd_train(cfg: Config, args) -> None:
    table = load_table(cfg)
    for P in args.horizons or [cfg.pred_len]:
        pcfg = cfg.replace(pred_len=P)
        run = train(pcfg, prepare_data(pcfg, table), args.out / checkpoint_name(pcfg))
        print(f"{pcfg.model} P={P}: best epoch {run.best_epoch}, val MSE {run.best_val_mse:.6g} -> {run.checkpoint}")


def cmd_evaluate(cfg: Config, args) -> None:
    table = load_table(cfg)
    rows = []
    for P in args.horizons or [cfg.pred_len]:
        pcfg = cfg.replace(pred_len=P)
        report = evaluate(args.out / checkpoint_name(pcfg), "test", prepare_data(pcfg, table))
        rows.extend(report.rows)
    out = args.out / "metrics.csv"
    MetricsReport(rows, cfg).to_csv(out)
    for r in rows:
        print(f"{r.model} S={r.seq_len} P={r.pred_len} {r.split}: MSE {r.mse:.6g} MAE {r.mae:.6g}")
    print(f"wrote {out}")


def cmd_predict(cfg: Config, args) -> None:
    table = load_table(cfg)
    for P in args.horizons or [cfg.pred_len]:
        pcfg = cfg.replace(pred_len=P)
        out = args.out / f"predictions_{pcfg.model}_S{pcfg.seq_len}_P{P}.csv"
        n = write_predictions(args.out / checkpoint_name(pcfg), out, args.split, prepare_data(pcfg, table))
        print(f"wrote {n} rows to {out}")


def cmd_benchmark(cfg: Config, args) -> None:
    rows = benchmark(cfg, args.horizons or [1, 4, 24, 48, 96])
    out = args.out / "timing.csv"
    write_timing_csv(rows, out, cfg)
    for r in rows:
        print(f"P={r.pred_len}: {r.seconds_per_epoch:.3f} s/epoch over {r.epochs} epochs")
    print(f"wrote {out}")


def cmd_generate(cfg: Config, args) -> None:
    table = generate_synthetic(SyntheticProfile.from_config(cfg), cfg.synthetic_T, cfg.seed)
    out = args.out / "synthetic.csv"
    write_csv(table, out)
    print(f"wrote {len(table)} rows to {out}")


def cmd_inspect(cfg: Config, args) -> None:
    table = load_table(cfg)
    stop = args.start + cfg.seq_len
    if args.start < 0 or stop > len(table):
        raise ValueError(f"window [{args.start}, {stop}) outside series of length {len(table)}")
    window = table.values[args.start : stop][None]
    periods = detect_periods(window, args.k or cfg.top_k)
    print(f"window rows {args.start}..{stop - 1} (S={cfg.seq_len}, N={table.n_vars})")
    print("rank\tfrequency\tperiod\tamplitude")
    for i, e in enumerate(periods, start=1):
        print(f"{i}\t{e.frequency}\t{e.period}\t{e.amplitude:.6g}")


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "generate-data": cmd_generate,
    "inspect-periods": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (ValueError, OSError, NoPeriodicityError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
