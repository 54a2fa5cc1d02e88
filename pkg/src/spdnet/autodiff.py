"""
Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations the forecasting model needs are provided. Every tensor
produced by an operation remembers its parents and a closure that maps the
output gradient to parent gradients; :meth:`Tensor.backward` walks the graph
in reverse topological order and accumulates gradients into leaf tensors.

Convolutions follow the cross-correlation convention (the kernel is not
flipped), matching most deep-learning libraries.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "NonFiniteError",
    "Tensor",
    "Parameter",
    "as_tensor",
    "matmul",
    "conv1d",
    "conv2d",
    "softmax",
    "layer_norm",
    "relu",
    "gelu",
    "concat",
    "stack",
    "pad_zeros",
    "mse_loss",
    "no_grad",
]


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf from its inputs."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph construction."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """
    An n-dimensional float64 array that can take part in autodiff.

    Parameters
    ----------
    data : array_like
        Values; copied into a contiguous float64 array.
    requires_grad : bool
        Whether gradients should be accumulated into ``.grad``.
    """

    __array_priority__ = 100  # so ndarray <op> Tensor defers to Tensor

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _op: str = "leaf"):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = _op
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str, backward) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(Tensor)
        data = np.asarray(data, dtype=np.float64)
        out.data = data if data.flags.c_contiguous else data.copy(order="C")
        out.grad = None
        out.op = op
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- backward -------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        ``self`` must be a scalar unless an explicit upstream ``grad`` is given.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ValueError(f"upstream grad shape {grad.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: accumulate
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._result(a.data + b.data, (a, b), "add", bw)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

        return Tensor._result(a.data - b.data, (a, b), "sub", bw)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), "neg", lambda g: (-g,))

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self.scale(other)
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._result(a.data * b.data, (a, b), "mul", bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self.scale(1.0 / other)
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            )

        with np.errstate(divide="ignore", invalid="ignore"):
            out = a.data / b.data
        return Tensor._result(out, (a, b), "div", bw)

    def scale(self, c: float) -> "Tensor":
        c = float(c)
        return Tensor._result(self.data * c, (self,), "scale", lambda g: (g * c,))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other) -> "Tensor":
        return matmul(as_tensor(other), self)

    def square(self) -> "Tensor":
        x = self.data
        return Tensor._result(x * x, (self,), "square", lambda g: (2.0 * x * g,))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape
        axes = _norm_axes(axis, self.ndim)

        def bw(g):
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._result(self.data.sum(axis=axes, keepdims=keepdims), (self,), "sum", bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _norm_axes(axis, self.ndim)
        count = int(np.prod([self.shape[a] for a in axes])) if axes else 1
        return self.sum(axis=axes, keepdims=keepdims).scale(1.0 / count)

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ValueError(
                f"cannot reshape {src} ({self.size} elements) into {tuple(shape)}"
            ) from None
        return Tensor._result(out, (self,), "reshape", lambda g: (g.reshape(src),))

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if sorted(axes) != list(range(self.ndim)):
            raise ValueError(f"invalid permutation {axes} for {self.ndim}-d tensor")
        inv = tuple(np.argsort(axes))
        return Tensor._result(
            self.data.transpose(axes), (self,), "permute", lambda g: (g.transpose(inv),)
        )

    def transpose(self, a: int = -2, b: int = -1) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.permute(axes)

    def __getitem__(self, idx) -> "Tensor":
        shape = self.shape

        def bw(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._result(self.data[idx], (self,), "slice", bw)

    def slice(self, axis: int, start: int, stop: int) -> "Tensor":
        axis = _check_axis(axis, self.ndim)
        idx = [slice(None)] * self.ndim
        idx[axis] = slice(start, stop)
        return self[tuple(idx)]


class Parameter(Tensor):
    """A learnable leaf tensor; ``name`` is filled in by the owning module."""

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise IndexError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(_check_axis(a, ndim) for a in axis))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- linear algebra ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product ``a[..., m, k] @ b[..., k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ValueError(f"matmul batch dims not broadcastable: {a.shape} @ {b.shape}") from None

    def bw(g):
        if b.ndim == 2:
            # weight on the right: fold every batch dim into the row axis
            ga = np.matmul(g, b.data.T)
            ga = _unbroadcast(ga, a.shape)
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        if a.ndim == 2:
            m, n = g.shape[-2], g.shape[-1]
            g2 = np.moveaxis(g, -2, 0).reshape(m, -1)
            b2 = np.moveaxis(np.broadcast_to(b.data, g.shape[:-2] + b.shape[-2:]), -2, -1)
            ga = g2 @ b2.reshape(-1, b.shape[-2])
            gb = _unbroadcast(np.matmul(a.data.T, g), b.shape)
            return ga, gb
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._result(out, (a, b), "matmul", bw)


# -- convolutions --------------------------------------------------------------


def _same_pads(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def conv1d(x, kernel, padding: str = "same", groups: int = 1) -> Tensor:
    """Cross-correlate ``x[batch, cin, len]`` with ``kernel[cout, cin/groups, kw]``.

    ``padding`` is ``"same"`` (output length == input length, extra pad on
    the right for even kernels) or ``"valid"``. ``groups`` must be 1 or equal
    to ``cin`` (depthwise, one filter per channel).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ValueError(f"conv1d expects 3-d input and kernel, got {x.shape} and {kernel.shape}")
    B, C, L = x.shape
    O, Ck, K = kernel.shape
    if groups == 1:
        if Ck != C:
            raise ValueError(f"conv1d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    elif groups == C:
        if O != C or Ck != 1:
            raise ValueError(f"depthwise conv1d needs kernel [{C},1,k], got {kernel.shape}")
    else:
        raise ValueError(f"groups must be 1 or {C}, got {groups}")
    if padding == "same":
        lo, hi = _same_pads(K)
    elif padding == "valid":
        lo, hi = 0, 0
    else:
        raise ValueError(f"unknown padding mode {padding!r}")
    if K > L + lo + hi:
        raise ValueError(f"kernel width {K} exceeds padded input length {L + lo + hi}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (lo, hi))) if lo or hi else x.data
    win = sliding_window_view(xp, K, axis=2)  # [B, C, Lout, K]
    Lout = win.shape[2]
    w = kernel.data
    if groups == 1:
        out = np.tensordot(win, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)  # [B, O, Lout]
    else:
        out = np.matmul(win, w[:, 0, :, None])[..., 0]  # [B, C, Lout]

    def bw(g):
        if groups == 1:
            gw = np.tensordot(g, win, axes=([0, 2], [0, 2]))  # [O, C, K]
        else:
            gw = np.einsum("bclk,bcl->ck", win, g)[:, None, :]
        gxp = np.zeros_like(xp)
        for k in range(K):
            if groups == 1:
                gxp[:, :, k : k + Lout] += np.tensordot(w[:, :, k], g, axes=([0], [1])).transpose(1, 0, 2)
            else:
                gxp[:, :, k : k + Lout] += g * w[None, :, 0, k, None]
        gx = gxp[:, :, lo : lo + L] if lo or hi else gxp
        return gx, gw

    return Tensor._result(out, (x, kernel), "conv1d", bw)


def conv2d(x, kernel, padding: str = "same") -> Tensor:
    """Cross-correlate ``x[batch, cin, h, w]`` with ``kernel[cout, cin, kh, kw]``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    B, C, H, W = x.shape
    O, Ck, KH, KW = kernel.shape
    if Ck != C:
        raise ValueError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    if padding == "same":
        (t, b_), (l, r) = _same_pads(KH), _same_pads(KW)
    elif padding == "valid":
        t = b_ = l = r = 0
    else:
        raise ValueError(f"unknown padding mode {padding!r}")
    if KH > H + t + b_ or KW > W + l + r:
        raise ValueError(f"kernel {KH}x{KW} exceeds padded input {H + t + b_}x{W + l + r}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (t, b_), (l, r)))
    win = sliding_window_view(xp, (KH, KW), axis=(2, 3))  # [B, C, Ho, Wo, KH, KW]
    Ho, Wo = win.shape[2], win.shape[3]
    w = kernel.data
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)  # [B, O, Ho, Wo]

    def bw(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # [O, C, KH, KW]
        gxp = np.zeros_like(xp)
        for i in range(KH):
            for j in range(KW):
                gxp[:, :, i : i + Ho, j : j + Wo] += np.tensordot(
                    w[:, :, i, j], g, axes=([0], [1])
                ).transpose(1, 0, 2, 3)
        return gxp[:, :, t : t + H, l : l + W], gw

    return Tensor._result(out, (x, kernel), "conv2d", bw)


# -- nonlinearities and normalization -----------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._result(y, (x,), "softmax", bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._result(x.data * mask, (x,), "relu", lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
    return Tensor._result(x.data * cdf, (x,), "gelu", lambda g: (g * (cdf + x.data * pdf),))


def layer_norm(x, gain, bias, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along ``axis``, then ``gain * . + bias``.

    ``gain`` and ``bias`` are 1-d with length ``x.shape[axis]``.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    axis = _check_axis(axis, x.ndim)
    D = x.shape[axis]
    if gain.shape != (D,) or bias.shape != (D,):
        raise ValueError(f"gain/bias must have shape ({D},), got {gain.shape}, {bias.shape}")
    bshape = [1] * x.ndim
    bshape[axis] = D
    gv, bv = gain.data.reshape(bshape), bias.data.reshape(bshape)

    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gv + bv
    other = tuple(i for i in range(x.ndim) if i != axis)

    def bw(g):
        dxhat = g * gv
        gx = inv * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        ggain = (g * xhat).sum(axis=other)
        gbias = g.sum(axis=other)
        return gx, ggain, gbias

    return Tensor._result(out, (x, gain, bias), "layer_norm", bw)


# -- joining and padding ------------------------------------------------------


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat needs at least one tensor")
    axis = _check_axis(axis, ts[0].ndim)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in ts], axis=axis)

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(out, ts, "concat", bw)


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("stack needs at least one tensor")
    axis = _check_axis(axis, ts[0].ndim + 1)
    out = np.stack([t.data for t in ts], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return Tensor._result(out, ts, "stack", bw)


def pad_zeros(x, length: int, axis: int = -1) -> Tensor:
    """Append zeros along ``axis`` until it has ``length`` entries."""
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    n = x.shape[axis]
    if length < n:
        raise ValueError(f"pad_zeros target {length} shorter than current extent {n}")
    if length == n:
        return x
    widths = [(0, 0)] * x.ndim
    widths[axis] = (0, length - n)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(0, n)
    idx = tuple(idx)
    return Tensor._result(np.pad(x.data, widths), (x,), "pad_zeros", lambda g: (g[idx],))


def mse_loss(pred, target) -> Tensor:
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    return (pred - target).square().mean()
