import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rowamp.channels import (
    AwgnRowChannel,
    QuantizedRowChannel,
    awgn_posterior_moments,
    default_clip,
    quantized_posterior_moments,
    truncated_normal_moments,
    truncated_posterior_1d,
)
from rowamp.numerics import gaussian_product

from conftest import random_pd
from oracles import quad_posterior_1d


def test_awgn_noiseless_limit(rng):
    y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    z0 = rng.standard_normal(2) + 0j
    zt, _ = awgn_posterior_moments(y, z0, np.eye(2), AwgnRowChannel(1e-12 * np.eye(2)))
    np.testing.assert_allclose(zt, y, atol=1e-9)


def test_awgn_perfect_prior(rng):
    y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    z0 = rng.standard_normal(2) + 0j
    zt, _ = awgn_posterior_moments(y, z0, 1e-12 * np.eye(2), AwgnRowChannel(np.eye(2)))
    np.testing.assert_allclose(zt, z0, atol=1e-9)


def test_awgn_matches_gaussian_product(rng):
    Sw, Qz = random_pd(rng, 2), random_pd(rng, 2)
    y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    z0 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    zt, Qt = awgn_posterior_moments(y, z0, Qz, AwgnRowChannel(Sw))
    c, C, _ = gaussian_product(y, Sw, z0, Qz)
    np.testing.assert_allclose(zt, c, atol=1e-12)
    np.testing.assert_allclose(Qt, C, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_awgn_trace_contraction(M, seed):
    rng = np.random.default_rng(seed)
    Sw, Qz = random_pd(rng, M), random_pd(rng, M, scale=3.0)
    _, Qt = awgn_posterior_moments(np.zeros(M), np.zeros(M), Qz, AwgnRowChannel(Sw))
    assert np.trace(Qt).real <= min(np.trace(Qz).real, np.trace(Sw).real) + 1e-10


def test_awgn_sample_zero_noise(rng):
    Z = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    Y, _ = AwgnRowChannel(np.zeros((2, 2))).sample(Z, rng)
    np.testing.assert_array_equal(Y, Z)


def test_sign_quantizer():
    ch = QuantizedRowChannel(bits=1, clip=1.0, noise_var=0.1)
    k, mid = ch.quantize(0.3)
    assert k == 1 and mid == 0.5
    low, up = ch.interval(k)
    assert low == 0.0 and up == np.inf


def test_boundary_goes_up():
    ch = QuantizedRowChannel(bits=3, clip=3.0, noise_var=0.1)
    edges = -3.0 + ch.step * np.arange(1, 8)
    k = ch.label(edges)
    np.testing.assert_array_equal(k, np.arange(1, 8))


def test_cells_tile_the_line():
    ch = QuantizedRowChannel(bits=3, clip=3.0, noise_var=0.1)
    v = np.arange(-5.0, 5.0, 1e-3)
    low, up = ch.interval(np.arange(8))
    inside = (v[:, None] >= low[None, :]) & (v[:, None] < up[None, :])
    assert np.all(inside.sum(axis=1) == 1)
    np.testing.assert_array_equal(np.argmax(inside, axis=1), ch.label(v))
    np.testing.assert_array_equal(low[1:], up[:-1])


def test_step_size():
    ch = QuantizedRowChannel(bits=4, clip=2.0, noise_var=0.1)
    assert ch.step == 2 * 2.0 / 16


def test_cell_probability_conservation():
    ch = QuantizedRowChannel(bits=3, clip=2.0, noise_var=0.3)
    z = np.linspace(-10, 10, 401)
    p = ch.cell_probabilities(z, 0.15)
    assert np.max(np.abs(p.sum(axis=-1) - 1)) < 1e-12


def test_cell_frequencies_multinomial(rng):
    ch = QuantizedRowChannel(bits=2, clip=1.5, noise_var=0.4, M=1)
    n, z = 100_000, 0.3 - 0.2j
    Y, _ = ch.sample(np.full((n, 1), z), rng)
    k = ch.label(Y.real[:, 0])
    freq = np.bincount(k, minlength=4) / n
    p = ch.cell_probabilities(z.real, 0.2)
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_high_resolution_sample_close(rng):
    ch = QuantizedRowChannel(bits=12, clip=4.0, noise_var=0.1, M=2)
    Z = rng.standard_normal((50, 2)) + 1j * rng.standard_normal((50, 2))
    Y, W = ch.sample(Z, rng)
    T = Z + W
    assert np.all(np.abs(Y.real - T.real) <= ch.step / 2 + 1e-12)
    assert np.all(np.abs(Y.imag - T.imag) <= ch.step / 2 + 1e-12)


def test_sign_cell_quadrature():
    m, v, under = truncated_posterior_1d(0.4, 1.0, 0.5, 0.0, np.inf)
    mq, vq = quad_posterior_1d(0.4, 1.0, 0.5, 0.0, np.inf)
    assert not under
    assert abs(m - mq) / abs(mq) < 1e-5
    assert abs(v - vq) / vq < 1e-5


@pytest.mark.parametrize("z0", [-2.0, -0.3, 0.0, 0.7, 3.0])
@pytest.mark.parametrize("cell", [(-np.inf, -1.0), (-0.5, 0.25), (0.0, np.inf), (2.0, 2.5)])
@pytest.mark.parametrize("var_w", [0.01, 0.5])
def test_truncated_posterior_grid(z0, cell, var_w):
    m, v, _ = truncated_posterior_1d(z0, 1.0, var_w, *cell)
    mq, vq = quad_posterior_1d(z0, 1.0, var_w, *cell)
    assert abs(m - mq) <= 1e-5 * max(abs(mq), 1.0)
    assert abs(v - vq) <= 1e-5 * vq


def test_truncated_normal_far_tail():
    # cell 40 sigma away: naive CDF differences would return 0/0
    m, v, logZ = truncated_normal_moments(0.0, 1.0, 40.0, 41.0)
    assert 40.0 < m < 40.1
    assert 0 < v < 1e-3
    assert np.isfinite(logZ)


def test_symmetric_cell_zero_mean():
    m, _, _ = truncated_posterior_1d(0.0, 1.0, 0.2, -0.5, 0.5)
    assert abs(m) < 1e-14


def test_quantized_matches_awgn_at_high_resolution(rng):
    M, nv = 2, 0.3
    ch = QuantizedRowChannel(bits=12, clip=6.0, noise_var=nv, M=M)
    z0 = 0.5 * (rng.standard_normal((20, M)) + 1j * rng.standard_normal((20, M)))
    qz = np.full((20, M), 0.8)
    Z = z0 + np.sqrt(0.4) * (rng.standard_normal((20, M)) + 1j * rng.standard_normal((20, M)))
    Y, _ = ch.sample(Z, rng)
    zt, qt, _ = quantized_posterior_moments(Y, z0, qz, ch)
    za, Qa = awgn_posterior_moments(Y, z0, 0.8 * np.eye(M), AwgnRowChannel(nv * np.eye(M)))
    assert np.max(np.abs(zt - za) / np.abs(za)) < 1e-3
    ref = np.broadcast_to(np.real(np.diagonal(Qa, axis1=-2, axis2=-1)), qt.shape)
    np.testing.assert_allclose(qt, ref, rtol=1e-3)


@settings(max_examples=80, deadline=None)
@given(
    st.floats(-3, 3),
    st.floats(0.05, 4),
    st.floats(0.01, 2),
    st.integers(0, 3),
)
def test_quantized_moment_properties(z0, var_z, var_w, k):
    ch = QuantizedRowChannel(bits=2, clip=2.0, noise_var=2 * var_w)
    low, up = ch.interval(k)
    m, v, under = truncated_posterior_1d(z0, var_z, var_w, low, up)
    if under:
        return
    assert 0 < v <= var_z * (1 + 1e-12)
    mt, _, _ = truncated_normal_moments(z0, var_z + var_w, low, up)
    assert np.sign(m - z0) == np.sign(mt - z0) or abs(m - z0) < 1e-12


def test_default_clip():
    assert default_clip(np.array([2.0, 2.0])) == pytest.approx(3.0)
