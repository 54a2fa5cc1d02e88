"""Seasonal-trend decomposition branch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, conv1d
from .nn import Linear, Module


@dataclass
class DecompositionOutput:
    trend: Tensor  # [B, S, N]
    seasonal: Tensor
    residual: Tensor
    projected: Tensor | None = None  # [B, P, N]


def averaging_kernel(channels: int, width: int) -> np.ndarray:
    return np.full((channels, 1, width), 1.0 / width)


class STDM(Module):
    """Trend / seasonal / residual split with learnable depthwise convolutions.

    Both convolutions start as moving averages (weights ``1/kernel``). The
    recombined series is projected from S to P steps by a linear map shared
    across variates.
    """

    def __init__(
        self,
        seq_len: int,
        pred_len: int,
        n_vars: int,
        rng: np.random.Generator,
        trend_kernel: int = 25,
        seasonal_kernel: int = 7,
    ):
        for name, k in (("trend_kernel", trend_kernel), ("seasonal_kernel", seasonal_kernel)):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {k}")
            if k >= seq_len:
                raise ValueError(f"{name}={k} must be smaller than seq_len={seq_len}")
        if trend_kernel <= seasonal_kernel:
            raise ValueError(f"trend_kernel ({trend_kernel}) must exceed seasonal_kernel ({seasonal_kernel})")
        self.seq_len, self.pred_len, self.n_vars = seq_len, pred_len, n_vars
        self.trend_conv = Parameter(averaging_kernel(n_vars, trend_kernel))
        self.seasonal_conv = Parameter(averaging_kernel(n_vars, seasonal_kernel))
        self.projection = Linear(seq_len, pred_len, rng)

    def _check(self, x: Tensor) -> None:
        if x.ndim != 3 or x.shape[1:] != (self.seq_len, self.n_vars):
            raise ValueError(
                f"STDM built for [B, {self.seq_len}, {self.n_vars}], got input shape {x.shape}"
            )

    def decompose(self, x) -> DecompositionOutput:
        x = as_tensor(x)
        self._check(x)
        xt = x.permute(0, 2, 1)  # [B, N, S]
        trend = conv1d(xt, self.trend_conv, "same", groups=self.n_vars)
        detrended = xt - trend
        seasonal = conv1d(detrended, self.seasonal_conv, "same", groups=self.n_vars)
        residual = xt - trend - seasonal
        return DecompositionOutput(
            trend=trend.permute(0, 2, 1),
            seasonal=seasonal.permute(0, 2, 1),
            residual=residual.permute(0, 2, 1),
        )

    def forward(self, x) -> Tensor:
        parts = self.decompose(x)
        recombined = parts.seasonal + parts.trend + parts.residual  # identical to x
        out = self.projection(recombined.permute(0, 2, 1))  # [B, N, P]
        return out.permute(0, 2, 1)
