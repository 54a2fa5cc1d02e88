"""
Seasonal-trend split of a window.

The decomposition module's convolutions start as moving averages, so before
training the trend is a 25-step running mean and the seasonal part a 7-step
running mean of what is left. The three parts always add back to the input.

Run:  python demos/decomposition.py
"""

import numpy as np

from spdnet.data import SyntheticProfile, generate_synthetic
from spdnet.stdm import STDM

S, P = 96, 24
table = generate_synthetic(SyntheticProfile(), T=2000, seed=1)
x = table.values[:S][None]

stdm = STDM(S, P, n_vars=1, rng=np.random.default_rng(0))
parts = stdm.decompose(x)
trend, seasonal, residual = (a.data[0, :, 0] for a in (parts.trend, parts.seasonal, parts.residual))

print("step   input   trend  seasonal  residual")
for i in range(0, S, 12):
    print(f"{i:4d} {x[0, i, 0]:7.3f} {trend[i]:7.3f} {seasonal[i]:9.3f} {residual[i]:9.3f}")
err = np.max(np.abs(trend + seasonal + residual - x[0, :, 0]))
print(f"max |trend + seasonal + residual - input| = {err:.1e}")
print("residual variance share:", round(float(residual.var() / x[0, :, 0].var()), 3))
