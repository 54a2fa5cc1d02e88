"""
Seconds per training epoch as the forecast horizon grows.

Only the final projections depend on P, so epoch time should stay nearly flat
from P=1 to P=96. Batches are built before timing starts.

Run:  python demos/horizon_benchmark.py
"""

from spdnet.config import Config
from spdnet.harness import benchmark

cfg = Config(synthetic_T=4000, max_train_batches=10, bench_epochs=2, bench_warmup=1)
rows = benchmark(cfg, [1, 4, 24, 48, 96])
base = rows[0].seconds_per_epoch
print("   P  s/epoch  vs P=1")
for r in rows:
    print(f"{r.pred_len:4d}  {r.seconds_per_epoch:7.3f}  {r.seconds_per_epoch / base:5.2f}x")
