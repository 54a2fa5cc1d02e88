"""
Numbered acceptance criteria, one test each.

Every test carries ``@pytest.mark.acceptance(n, title)``; ``conftest.py``
prints one PASS/FAIL line per criterion at the end of the session. Measured
quantities are attached as a short ``detail`` string.

Criteria 7 and 10 train real models through the CLI; 7 alone takes a few
minutes on one core.
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import numeric_grad, rel_error
from spdnet.autodiff import mse_loss
from spdnet.cli import main
from spdnet.config import Config
from spdnet.data import Scaler, SeriesTable, make_windows, split, window_starts
from spdnet.harness import prepare_data
from spdnet.pdm import SPDNet
from spdnet.spectral import PeriodEntry, detect_periods, fold, unfold
from spdnet.stdm import STDM


def detail(record_property, text):
    record_property("detail", text)


def metrics_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def sinusoid(S, f, amp=1.0, phase=0.3):
    t = np.arange(S)
    return amp * np.sin(2 * np.pi * f * t / S + phase)


# -- 1 ----------------------------------------------------------------------------


@pytest.mark.acceptance(1, "finite-difference gradients of every parameter group, tiny SPDNet")
def test_gradient_integrity(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    B, S, P, N = 2, 32, 4, 2
    model = SPDNet(S, P, N, seed=3, top_k=2, d_model=8, n_heads=2, n_layers=1, d_ff=16)
    for p in model.parameters():  # move away from the structured initialization
        p.data = p.data + 0.3 * rng.standard_normal(p.shape)
    t = np.arange(S)
    x = (np.sin(2 * np.pi * 4 * t / S) + 0.6 * np.cos(2 * np.pi * 3 * t / S))[None, :, None]
    x = x + 0.3 * rng.standard_normal((B, S, N))
    y = rng.standard_normal((B, P, N))
    assert len(detect_periods(x, 2)) == 2

    model.zero_grad()
    mse_loss(model(x), y).backward()
    errors = {}
    for name, p in model.named_parameters():
        num = numeric_grad(lambda: mse_loss(model(x), y).item(), p.data)
        errors[name] = rel_error(p.grad, num)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    detail(record_property, f"{len(errors)} groups, worst {worst} {errors[worst]:.2e}, {elapsed:.1f}s")
    assert {"alpha1", "alpha2"} <= set(errors)
    assert all(e < 1e-3 for e in errors.values()), errors
    assert elapsed < 60


# -- 2 ----------------------------------------------------------------------------


@pytest.mark.acceptance(2, "period detection on single tones and 2:1 two-tone signals")
def test_period_detection_oracle(record_property):
    t0 = time.perf_counter()
    checked = 0
    for S in (32, 96):
        for f in range(2, S // 4 + 1):
            x = sinusoid(S, f)[None, :, None]
            top = detect_periods(x, 1)[0]
            assert (top.frequency, top.period) == (f, math.ceil(S / f)), (S, f)
            checked += 1
        for f_big in range(2, S // 4 + 1):
            for f_small in range(2, S // 4 + 1):
                if f_big == f_small:
                    continue
                x = (sinusoid(S, f_big, 2.0) + sinusoid(S, f_small, 1.0, phase=1.1))[None, :, None]
                got = detect_periods(x, 2)
                assert got.frequencies == [f_big, f_small], (S, f_big, f_small)
                assert got.periods == [math.ceil(S / f_big), math.ceil(S / f_small)]
                checked += 1
    elapsed = time.perf_counter() - t0
    detail(record_property, f"{checked} signals, {elapsed:.2f}s")
    assert elapsed < 10


# -- 3 ----------------------------------------------------------------------------


@pytest.mark.acceptance(3, "fold/unfold bijection with exact zero padding, 1000 random cases")
def test_fold_unfold_bijection(record_property):
    rng = np.random.default_rng(3)
    padded_cases = 0
    for _ in range(1000):
        S = int(rng.integers(1, 400))
        f = int(rng.integers(1, S + 1))
        p = math.ceil(S / f) + int(rng.integers(0, 4))
        B, N = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = rng.standard_normal((B, S, N)) * 10.0 ** rng.uniform(-3, 3)
        folded = fold(x, PeriodEntry(f, p, 1.0))
        assert folded.tensor.shape == (B, p, f, N)
        assert np.array_equal(unfold(folded).data, x)
        flat = folded.tensor.data.transpose(0, 2, 1, 3).reshape(B, p * f, N)
        assert np.array_equal(flat[:, :S], x)
        assert np.all(flat[:, S:] == 0.0)
        padded_cases += p * f > S
    detail(record_property, f"1000 cases, {padded_cases} with padding")


# -- 4 ----------------------------------------------------------------------------


@pytest.mark.acceptance(4, "trend + seasonal + residual reproduces the input within 1e-9")
def test_stdm_identity(record_property):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        S = int(rng.integers(16, 129))
        seasonal = int(rng.choice(np.arange(1, S // 2, 2)))
        trend = int(rng.choice(np.arange(seasonal + 2, S, 2)))
        B, N = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        stdm = STDM(S, 4, N, rng, trend_kernel=trend, seasonal_kernel=seasonal)
        for p in stdm.parameters():
            p.data = rng.standard_normal(p.shape)
        x = rng.standard_normal((B, S, N)) * 10.0 ** rng.uniform(-2, 3)
        parts = stdm.decompose(x)
        recombined = parts.trend.data + parts.seasonal.data + parts.residual.data
        worst = max(worst, float(np.max(np.abs(recombined - x))))
    detail(record_property, f"max abs error {worst:.1e}")
    assert worst <= 1e-9


# -- 5 ----------------------------------------------------------------------------


@pytest.mark.acceptance(5, "attention rows sum to 1 within 1e-9 across a config sweep")
def test_attention_normalization(record_property):
    rng = np.random.default_rng(5)
    rows_checked, worst = 0, 0.0
    for trial in range(40):
        S = int(rng.choice([32, 48, 96]))
        N = int(rng.integers(1, 7))
        n_heads = int(rng.choice([1, 2, 4]))
        d_model = n_heads * int(rng.choice([2, 4, 8]))
        model = SPDNet(
            S,
            int(rng.choice([1, 4, 24])),
            N,
            seed=trial,
            top_k=int(rng.integers(1, 4)),
            d_model=d_model,
            n_heads=n_heads,
            n_layers=int(rng.integers(1, 4)),
            d_ff=2 * d_model,
            trend_kernel=13,
            seasonal_kernel=5,
        )
        scale = 10.0 ** rng.uniform(-2, 3)  # magnitudes up to 1e3
        x = scale * rng.standard_normal((int(rng.integers(1, 5)), S, N))
        out = model(x).data
        assert np.all(np.isfinite(out))
        for probs in model.attention_maps():
            assert probs.shape[-1] == probs.shape[-2] == N
            sums = probs.sum(axis=-1)
            worst = max(worst, float(np.max(np.abs(sums - 1.0))))
            rows_checked += sums.size
    detail(record_property, f"{rows_checked} rows, max deviation {worst:.1e}")
    assert worst <= 1e-9


# -- 6 ----------------------------------------------------------------------------


@pytest.mark.acceptance(6, "output shape [B,P,N] on the full grid; parameter shapes input-independent")
def test_shape_grid(record_property):
    rng = np.random.default_rng(6)
    points = 0
    for S in (32, 96):
        for P in (1, 4, 24):
            for N in (1, 3):
                for k in (1, 2, 3):
                    model = SPDNet(S, P, N, seed=0, top_k=k)
                    shapes = {n: p.shape for n, p in model.named_parameters()}
                    seen_periods = set()
                    for B in (1, 4):
                        for f in (2, 5):
                            x = sinusoid(S, f)[None, :, None] + 0.1 * rng.standard_normal((B, S, N))
                            seen_periods.add(tuple(detect_periods(x, k).periods))
                            assert model(x).shape == (B, P, N)
                            assert {n: p.shape for n, p in model.named_parameters()} == shapes
                            points += 1
                    assert len(seen_periods) > 1
    detail(record_property, f"{points} forward passes")


# -- 7 ----------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.acceptance(7, "SPDNet beats persistence by 20% and is within 5% of linear, T=20000 S=96 P=24")
def test_end_to_end_learning(tmp_path, record_property):
    cfg = Config()
    assert (cfg.synthetic_T, cfg.seq_len, cfg.pred_len) == (20000, 96, 24)
    cfg_path = tmp_path / "default.cfg"
    cfg.save(cfg_path)
    mse, seconds = {}, {}
    for model in ("spdnet", "linear", "persistence"):
        out = tmp_path / model
        t0 = time.perf_counter()
        assert main(["train", "--config", str(cfg_path), "--model", model, "--out", str(out)]) == 0
        seconds[model] = time.perf_counter() - t0
        assert main(["evaluate", "--config", str(cfg_path), "--model", model, "--out", str(out)]) == 0
        seconds[f"{model}+eval"] = time.perf_counter() - t0
        (row,) = metrics_rows(out / "metrics.csv")
        mse[model] = float(row["mse"])
    detail(
        record_property,
        f"test MSE spdnet {mse['spdnet']:.4f}, linear {mse['linear']:.4f}, persistence {mse['persistence']:.4f}; "
        f"spdnet train {seconds['spdnet']:.0f}s, train+evaluate {seconds['spdnet+eval']:.0f}s",
    )
    assert mse["spdnet"] <= 0.8 * mse["persistence"]
    assert mse["spdnet"] <= 1.05 * mse["linear"]
    assert seconds["spdnet"] <= 600
    assert seconds["spdnet+eval"] < 300  # the CLI's train-then-evaluate budget


# -- 8 ----------------------------------------------------------------------------


@pytest.mark.acceptance(8, "benchmark table for P in {1,4,24,48,96}; time(P=96) < 3 x time(P=1)")
def test_horizon_benchmark(tmp_path, record_property):
    cfg_path = tmp_path / "bench.cfg"
    Config(synthetic_T=4000, max_train_batches=20, bench_epochs=2, bench_warmup=1).save(cfg_path)
    assert main(["benchmark", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    rows = metrics_rows(tmp_path / "timing.csv")
    assert [int(r["P"]) for r in rows] == [1, 4, 24, 48, 96]
    assert all(r["seconds_per_epoch"] and r["epochs"] and r["batches_per_epoch"] for r in rows)
    secs = {int(r["P"]): float(r["seconds_per_epoch"]) for r in rows}
    ratio = secs[96] / secs[1]
    detail(record_property, ", ".join(f"P={p} {s:.3f}s" for p, s in secs.items()) + f"; ratio {ratio:.2f}")
    assert ratio < 3.0


# -- 9 ----------------------------------------------------------------------------


def _table(values):
    values = np.asarray(values, dtype=np.float64).reshape(len(values), -1)
    stamps = np.datetime64("2021-01-01T00:00:00") + np.arange(len(values)) * np.timedelta64(900, "s")
    return SeriesTable(stamps, values, [f"c{i}" for i in range(values.shape[1])])


@pytest.mark.acceptance(9, "70/10/20 floor split, scaler fit on train only, exhaustive window alignment")
def test_data_pipeline(record_property):
    tr, va, te = split(_table(np.arange(118356)), 0.7, 0.1, 0.2)
    assert (len(tr), len(va), len(te)) == (82849, 11835, 23672)
    assert tr.values[-1, 0] + 1 == va.values[0, 0] and va.values[-1, 0] + 1 == te.values[0, 0]

    # leakage: scaler statistics ignore everything after the training split
    rng = np.random.default_rng(9)
    cfg = Config(seq_len=8, pred_len=2)
    base = rng.standard_normal((1000, 2))
    tampered = base.copy()
    tampered[700:] = 1e6 * rng.standard_normal((300, 2))
    a = prepare_data(cfg.replace(target="c0"), _table(base))
    b = prepare_data(cfg.replace(target="c0"), _table(tampered))
    assert np.array_equal(a.scaler.mean, b.scaler.mean) and np.array_equal(a.scaler.std, b.scaler.std)
    np.testing.assert_allclose(a.scaler.mean, base[:700].mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(a.scaler.std, base[:700].std(axis=0), rtol=1e-12)
    assert np.array_equal(a.train.values, b.train.values)
    assert np.array_equal(Scaler().fit(base[:700]).transform(base[700:800]), a.val.values)

    # alignment: every window for every T <= 200 over a spread of (S, P)
    windows = 0
    for S in (1, 2, 3, 5, 8, 16, 32, 96):
        for P in (1, 2, 4, 24):
            for T in range(S + P, 201):
                series = np.arange(T, dtype=np.float64)[:, None] * np.array([[1.0, -1.0]])
                starts = []
                for batch in make_windows(series, S, P, 7):
                    for s, inp, tgt in zip(batch.starts, batch.inputs, batch.targets):
                        assert np.array_equal(inp[:, 0], np.arange(s, s + S))
                        assert np.array_equal(tgt[:, 0], np.arange(s + S, s + S + P))
                        assert np.array_equal(inp[:, 1], -inp[:, 0])
                        starts.append(int(s))
                assert starts == list(range(T - S - P + 1)) == window_starts(T, S, P).tolist()
                windows += len(starts)
    detail(record_property, f"{windows} windows checked")


# -- 10 ---------------------------------------------------------------------------


@pytest.mark.acceptance(10, "two seeded train+evaluate runs give bit-identical metrics CSVs")
def test_determinism(tmp_path, record_property):
    cfg_path = tmp_path / "small.cfg"
    Config(
        synthetic_T=3000,
        synthetic_covariates=True,
        seq_len=48,
        pred_len=8,
        top_k=2,
        d_model=16,
        n_heads=2,
        n_layers=1,
        d_ff=32,
        trend_kernel=13,
        seasonal_kernel=5,
        max_epochs=3,
        max_train_batches=10,
        seed=123,
    ).save(cfg_path)
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        base = ["--config", str(cfg_path), "--out", str(out), "--horizons", "4,8"]
        assert main(["train", *base]) == 0
        assert main(["evaluate", *base]) == 0
        outputs.append(out)
    first, second = ((o / "metrics.csv").read_bytes() for o in outputs)
    detail(record_property, f"metrics.csv {len(first)} bytes")
    assert first == second
    for name in ("spdnet_S48_P4.ckpt", "spdnet_S48_P8.ckpt"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
