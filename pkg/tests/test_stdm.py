import numpy as np
import pytest

import oracles
from conftest import numeric_grad, rel_error
from spdnet.autodiff import Parameter, mse_loss
from spdnet.stdm import STDM


def make(S=32, P=4, N=2, seed=0, **kw):
    return STDM(S, P, N, np.random.default_rng(seed), **kw)


def randomize(stdm, rng):
    for p in stdm.parameters():
        p.data = rng.standard_normal(p.shape)


def test_constant_input_with_averaging_init():
    stdm = make(S=64, N=1, trend_kernel=5, seasonal_kernel=3)
    x = np.full((1, 64, 1), 2.5)
    parts = stdm.decompose(x)
    interior = slice(4, 60)  # both kernels fully inside the series
    np.testing.assert_allclose(parts.trend.data[0, interior, 0], 2.5, rtol=1e-14)
    np.testing.assert_allclose(parts.seasonal.data[0, interior, 0], 0.0, atol=1e-14)
    np.testing.assert_allclose(parts.residual.data[0, interior, 0], 0.0, atol=1e-14)


def test_parts_sum_to_input(rng):
    stdm = make()
    randomize(stdm, rng)
    x = rng.standard_normal((3, 32, 2))
    parts = stdm.decompose(x)
    np.testing.assert_allclose(parts.trend.data + parts.seasonal.data + parts.residual.data, x, atol=1e-9)


def test_ramp_trend_matches_moving_average():
    K = 9
    stdm = make(S=48, N=1, trend_kernel=K, seasonal_kernel=3)
    ramp = np.arange(48.0) * 0.5 + 1.0
    trend = stdm.decompose(ramp[None, :, None]).trend.data[0, :, 0]
    ref = oracles.moving_average_same(ramp, K)
    np.testing.assert_allclose(trend, ref, rtol=1e-12)
    np.testing.assert_allclose(trend[K // 2 : 48 - K // 2], ramp[K // 2 : 48 - K // 2], rtol=1e-12)


def test_copy_last_projection():
    stdm = make(S=32, P=5, N=2)
    w = np.zeros((32, 5))
    w[-1, :] = 1.0
    stdm.projection.weight.data = w
    x = np.random.default_rng(3).standard_normal((2, 32, 2))
    out = stdm(x).data
    np.testing.assert_allclose(out, np.repeat(x[:, -1:, :], 5, axis=1), rtol=1e-12)


def test_zero_input_zero_output():
    assert np.all(make()(np.zeros((2, 32, 2))).data == 0.0)


def test_output_equals_direct_projection(rng):
    stdm = make()
    randomize(stdm, rng)
    x = rng.standard_normal((3, 32, 2))
    np.testing.assert_allclose(stdm(x).data, oracles.stdm_forward(x, stdm), rtol=1e-9, atol=1e-10)


@pytest.mark.parametrize("B,S,P,N", [(1, 32, 1, 1), (4, 96, 24, 3), (2, 40, 7, 2)])
def test_output_shape(B, S, P, N):
    assert make(S=S, P=P, N=N)(np.ones((B, S, N))).shape == (B, P, N)


@pytest.mark.parametrize(
    "kw", [dict(trend_kernel=24), dict(seasonal_kernel=4), dict(trend_kernel=33), dict(trend_kernel=7, seasonal_kernel=7)]
)
def test_bad_kernels(kw):
    with pytest.raises(ValueError):
        make(**kw)


def test_shape_guard():
    with pytest.raises(ValueError, match="STDM built"):
        make()(np.ones((1, 31, 2)))


def test_gradients(rng):
    stdm = make(P=3)
    randomize(stdm, rng)
    x = rng.standard_normal((2, 32, 2))
    y = rng.standard_normal((2, 3, 2))
    stdm.zero_grad()
    mse_loss(stdm(x), y).backward()
    assert np.linalg.norm(stdm.projection.weight.grad) > 0
    # the recombination is the identity, so the decomposition kernels get no gradient
    for conv in (stdm.trend_conv, stdm.seasonal_conv):
        np.testing.assert_allclose(conv.grad, 0.0, atol=1e-12)
    for name, p in stdm.named_parameters():
        num = numeric_grad(lambda: mse_loss(stdm(x), y).item(), p.data)
        assert rel_error(p.grad, num) < 1e-4, name
