"""
Train SPDNet and the two yardstick baselines on synthetic data.

Uses a reduced configuration so the run finishes in well under a minute;
``spdnet train`` with the default config is the full-size version. Test
metrics are on the standardized target column.

Run:  python demos/train_and_evaluate.py [output-dir]
"""

import sys
from pathlib import Path

from spdnet.config import Config
from spdnet.harness import evaluate, prepare_data, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs")
out.mkdir(parents=True, exist_ok=True)

cfg = Config(synthetic_T=6000, d_model=32, n_heads=4, n_layers=1, d_ff=64, max_epochs=4, patience=2)
data = prepare_data(cfg)
print(f"splits: train {len(data.train)}, val {len(data.val)}, test {len(data.test)} rows")

for model in ("persistence", "linear", "spdnet"):
    mcfg = cfg.replace(model=model)
    run = train(mcfg, data, out / f"{model}.ckpt")
    (row,) = evaluate(run.checkpoint, "test", data).rows
    print(f"{model:12s} epochs {len(run.epochs):2d}  test MSE {row.mse:.4f}  MAE {row.mae:.4f}")

print(f"checkpoints and run logs in {out}/")
