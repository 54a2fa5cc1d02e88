"""
Periodical decomposition branch and the full SPDNet model.

For every dominant period the input is folded into a 2D grid and passed
through three parallel branches:

* short-term: 1D convolution along the position-in-cycle axis,
* periodic: 2D convolution over the (position, cycle) plane,
* long-term: 1D convolution, inverted embedding (one token per variate) and
  a transformer encoder.

Each branch unfolds back to length S before its projection, so no learnable
shape depends on the detected periods. Branch weights are shared across the
periods, which lets all periods run as one stacked batch.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    as_tensor,
    conv1d,
    conv2d,
    matmul,
    pad_zeros,
    softmax,
    stack,
)
from .nn import LayerNorm, Linear, Module, get_activation, init_uniform
from .spectral import Folded2D, PeriodSet, detect_periods, fold
from .stdm import STDM


class MultiHeadAttention(Module):
    """Full (unmasked) self-attention over the token axis.

    ``w_q``/``w_k``/``w_v`` are ``[d_model, d_model]``; columns
    ``h*d_k:(h+1)*d_k`` form head ``h``. Head outputs are concatenated on the
    feature axis and mixed by ``w_o`` (identity at init). The most recent
    attention probabilities are kept in ``last_attention``.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.w_q = Parameter(init_uniform(rng, (d_model, d_model), d_model))
        self.w_k = Parameter(init_uniform(rng, (d_model, d_model), d_model))
        self.w_v = Parameter(init_uniform(rng, (d_model, d_model), d_model))
        self.w_o = Parameter(np.eye(d_model))
        self._last_attention: np.ndarray | None = None

    @property
    def last_attention(self) -> np.ndarray | None:
        return self._last_attention

    def _heads(self, t: Tensor) -> Tensor:
        M, T, _ = t.shape
        return t.reshape(M, T, self.n_heads, self.d_k).permute(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        M, T, D = x.shape
        q = self._heads(matmul(x, self.w_q))
        k = self._heads(matmul(x, self.w_k))
        v = self._heads(matmul(x, self.w_v))
        scores = matmul(q, k.transpose(-1, -2)).scale(1.0 / math.sqrt(self.d_k))
        probs = softmax(scores, axis=-1)  # [M, H, T, T]
        self._last_attention = probs.data
        heads = matmul(probs, v)  # [M, H, T, d_k]
        concat = heads.permute(0, 2, 1, 3).reshape(M, T, D)
        return matmul(concat, self.w_o)


class EncoderLayer(Module):
    """attention -> FFN -> (attention output + FFN output) -> layer norm."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator, activation: str = "gelu"):
        self.attention = MultiHeadAttention(d_model, n_heads, rng)
        self.ff_in = Linear(d_model, d_ff, rng)
        self.ff_out = Linear(d_ff, d_model, rng)
        self.norm = LayerNorm(d_model)
        self._act = get_activation(activation)

    def forward(self, x: Tensor) -> Tensor:
        attended = self.attention(x)
        ffn = self.ff_out(self._act(self.ff_in(attended)))
        return self.norm(attended + ffn)


class Encoder(Module):
    def __init__(self, d_model: int, n_heads: int, n_layers: int, d_ff: int, rng, activation: str = "gelu"):
        self.layers = [EncoderLayer(d_model, n_heads, d_ff, rng, activation) for _ in range(n_layers)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def attention_maps(self) -> list[np.ndarray]:
        return [layer.attention.last_attention for layer in self.layers]


def _cycle_conv(folded: Folded2D, kernel: Parameter) -> Tensor:
    """1D conv along the position-in-cycle axis for every cycle; returns [B, N, S]."""
    t = folded.tensor
    B, p, f, N = t.shape
    seqs = t.permute(0, 3, 2, 1).reshape(B * N * f, 1, p)
    out = conv1d(seqs, kernel, "same")
    return out.reshape(B, N, f * p).slice(2, 0, folded.valid_length)


def _plane_conv(folded: Folded2D, kernel: Parameter) -> Tensor:
    """2D conv over the (position, cycle) plane; returns [B, N, S]."""
    t = folded.tensor
    B, p, f, N = t.shape
    planes = t.permute(0, 3, 1, 2).reshape(B * N, 1, p, f)
    out = conv2d(planes, kernel, "same")
    flat = out.reshape(B, N, p, f).permute(0, 1, 3, 2).reshape(B, N, f * p)
    return flat.slice(2, 0, folded.valid_length)


class PDM(Module):
    def __init__(
        self,
        seq_len: int,
        pred_len: int,
        n_vars: int,
        rng: np.random.Generator,
        top_k: int = 3,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        d_ff: int = 128,
        activation: str = "gelu",
    ):
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.seq_len, self.pred_len, self.n_vars, self.top_k = seq_len, pred_len, n_vars, top_k

        self.short_conv = Parameter(init_uniform(rng, (1, 1, 3), 3))
        self.short_proj = Linear(seq_len, pred_len, rng)

        self.periodic_conv = Parameter(init_uniform(rng, (1, 1, 3, 3), 9))
        self.periodic_proj = Linear(seq_len, pred_len, rng)

        self.long_conv = Parameter(init_uniform(rng, (1, 1, 3), 3))
        self.embedding = Linear(seq_len, d_model, rng)
        self.encoder = Encoder(d_model, n_heads, n_layers, d_ff, rng, activation)
        self.long_proj = Linear(d_model, pred_len, rng)

        self.fusion = Parameter(np.full((top_k, 1), 1.0 / top_k))

    # -- single-period branches (each returns [B, P, N]) ----------------------

    def short_branch(self, folded: Folded2D) -> Tensor:
        return self.short_proj(_cycle_conv(folded, self.short_conv)).permute(0, 2, 1)

    def periodic_branch(self, folded: Folded2D) -> Tensor:
        return self.periodic_proj(_plane_conv(folded, self.periodic_conv)).permute(0, 2, 1)

    def long_branch(self, folded: Folded2D) -> Tensor:
        return self._long_head(_cycle_conv(folded, self.long_conv)).permute(0, 2, 1)

    def _long_head(self, series: Tensor) -> Tensor:
        """[..., N, S] -> embedding -> encoder over variate tokens -> [..., N, P]."""
        lead = series.shape[:-2]
        N, S = series.shape[-2:]
        tokens = self.embedding(series.reshape(-1, N, S))
        encoded = self.encoder(tokens)
        return self.long_proj(encoded).reshape(*lead, N, self.pred_len)

    # -- all periods ----------------------------------------------------------

    def forward(self, x, periods: PeriodSet | None = None, trace: dict | None = None) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != (self.seq_len, self.n_vars):
            raise ValueError(f"PDM built for [B, {self.seq_len}, {self.n_vars}], got {x.shape}")
        if periods is None:
            periods = detect_periods(x, self.top_k)
        entries = list(periods)[: self.top_k]

        short, per, long_ = [], [], []
        for entry in entries:
            folded = fold(x, entry)
            short.append(_cycle_conv(folded, self.short_conv))
            per.append(_plane_conv(folded, self.periodic_conv))
            long_.append(_cycle_conv(folded, self.long_conv))
        # [k', B, N, S] -> projections shared over the period axis
        s_out = self.short_proj(stack(short))
        p_out = self.periodic_proj(stack(per))
        l_out = self._long_head(stack(long_))
        summed = s_out + p_out + l_out  # [k', B, N, P]

        fused_in = pad_zeros(summed.permute(1, 3, 2, 0), self.top_k, axis=3)  # [B, P, N, k_max]
        B = x.shape[0]
        out = matmul(fused_in, self.fusion).reshape(B, self.pred_len, self.n_vars)

        if trace is not None:
            trace["periods"] = periods
            for i in range(len(entries)):
                trace[f"short_{i}"] = s_out.data[i].transpose(0, 2, 1).copy()
                trace[f"periodic_{i}"] = p_out.data[i].transpose(0, 2, 1).copy()
                trace[f"long_{i}"] = l_out.data[i].transpose(0, 2, 1).copy()
            trace["pdm"] = out.data.copy()
        return out


class SPDNet(Module):
    """``alpha1 * PDM(x) + alpha2 * STDM(x)`` mapping ``[B, S, N]`` to ``[B, P, N]``."""

    def __init__(
        self,
        seq_len: int,
        pred_len: int,
        n_vars: int,
        seed: int = 42,
        top_k: int = 3,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        d_ff: int = 128,
        trend_kernel: int = 25,
        seasonal_kernel: int = 7,
        activation: str = "gelu",
    ):
        rng = np.random.default_rng(seed)
        self.seq_len, self.pred_len, self.n_vars = seq_len, pred_len, n_vars
        self.stdm = STDM(seq_len, pred_len, n_vars, rng, trend_kernel, seasonal_kernel)
        self.pdm = PDM(seq_len, pred_len, n_vars, rng, top_k, d_model, n_heads, n_layers, d_ff, activation)
        self.alpha1 = Parameter(np.array([0.5]))
        self.alpha2 = Parameter(np.array([0.5]))
        self.period_hook = None  # called with each PeriodSet, e.g. spectral.PeriodDump

    @classmethod
    def from_config(cls, cfg, n_vars: int) -> "SPDNet":
        return cls(
            cfg.seq_len,
            cfg.pred_len,
            n_vars,
            seed=cfg.seed,
            top_k=cfg.top_k,
            d_model=cfg.d_model,
            n_heads=cfg.n_heads,
            n_layers=cfg.n_layers,
            d_ff=cfg.d_ff,
            trend_kernel=cfg.trend_kernel,
            seasonal_kernel=cfg.seasonal_kernel,
            activation=cfg.activation,
        )

    def attention_maps(self) -> list[np.ndarray]:
        return self.pdm.encoder.attention_maps()

    def forward(self, x, trace: dict | None = None) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != (self.seq_len, self.n_vars):
            raise ValueError(f"SPDNet built for [B, {self.seq_len}, {self.n_vars}], got {x.shape}")
        periods = detect_periods(x, self.pdm.top_k)
        if self.period_hook is not None:
            self.period_hook(periods)
        pdm_out = self.pdm(x, periods, trace)
        stdm_out = self.stdm(x)
        if trace is not None:
            trace["stdm"] = stdm_out.data.copy()
        return self.alpha1 * pdm_out + self.alpha2 * stdm_out


def dump_trace(trace: dict, path) -> None:
    """Write per-branch outputs recorded by ``forward(..., trace=...)`` to an ``.npz``."""
    arrays = {k: v for k, v in trace.items() if isinstance(v, np.ndarray)}
    if "periods" in trace:
        arrays["periods"] = np.array(
            [[e.frequency, e.period, e.amplitude] for e in trace["periods"]], dtype=np.float64
        )
    np.savez(path, **arrays)
