import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlsgauge.gauge import GaugeSpec, J, gauge, gauge_grid, gauge_inverse, h, truncation_residual
from dnlsgauge.spectral import SpectralField, coeffs_to_grid, grid_points, padded_size

from conftest import random_field
from oracles import evaluate, nested_quadrature_J

BUMP = SpectralField.from_modes(4, {0: 1.0, 1: 0.5})


def test_J_and_h_of_bump():
    x = grid_points(padded_size(4))
    assert np.allclose(J(BUMP).values, np.sin(x), atol=1e-14)
    assert np.allclose(h(BUMP).values, np.cos(x), atol=1e-14)


def test_gauge_of_bump_on_grid():
    x = grid_points(64)
    want = np.exp(-1j * np.sin(x)) * (1 + 0.5 * np.exp(1j * x))
    assert np.allclose(gauge_grid(BUMP, GaugeSpec(), 64), want, atol=1e-13)
    assert np.allclose(coeffs_to_grid(gauge(BUMP, n_out=30).coeffs, 64), want, atol=1e-13)


def test_J_matches_nested_quadrature(rng):
    f = random_field(12, rng, batch=(3,))
    x = grid_points(padded_size(12))
    ref = nested_quadrature_J(f.coeffs, x)
    assert np.max(np.abs(J(f).values - ref)) < 1e-11


@pytest.mark.parametrize("f", [SpectralField.from_modes(3, {0: 0.7 - 0.2j}), SpectralField.from_modes(3, {2: 1.0}),
                               SpectralField.from_modes(3, {-3: 0.4j})])
def test_constants_and_plane_waves_are_fixed(f):
    assert np.allclose(J(f).values, 0, atol=1e-14)
    assert np.allclose(gauge(f).coeffs, f.coeffs, atol=1e-14)
    assert np.allclose(gauge_inverse(f).coeffs, f.coeffs, atol=1e-14)


def test_cutoff_mode():
    f = random_field(6, np.random.default_rng(3), scale=2.0)
    m = np.sum(np.abs(f.coeffs) ** 2)
    above = GaugeSpec(B=np.sqrt(2 * np.pi * m) * 0.99, mode="cutoff")
    below = GaugeSpec(B=np.sqrt(2 * np.pi * m) * 1.01, mode="cutoff")
    assert not above.active(m) and below.active(m)
    assert np.all(J(f, above).values == 0) and np.all(h(f, above).values == 0)
    assert np.allclose(gauge(f, above).coeffs, f.coeffs, rtol=0, atol=1e-14)
    assert np.allclose(J(f, below).values, J(f).values)
    with pytest.raises(ValueError):
        GaugeSpec(B=0.0)
    with pytest.raises(ValueError):
        GaugeSpec(mode="soft")


def test_gauge_grid_guard():
    with pytest.raises(ValueError):
        gauge_grid(BUMP, GaugeSpec(), 16)


@given(N=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_modulus_preserved(N, seed):
    f = random_field(N, np.random.default_rng(seed))
    M = padded_size(N)
    g = gauge_grid(f, GaugeSpec(), M)
    assert np.max(np.abs(np.abs(g) - np.abs(coeffs_to_grid(f.coeffs, M)))) < 1e-12


@given(N=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_round_trip(N, seed):
    f = random_field(N, np.random.default_rng(seed))
    back = gauge_inverse(gauge(f, n_out=max(8 * N, 128)), n_out=N)
    x = np.linspace(0, 2 * np.pi, 97)
    assert np.max(np.abs(evaluate(back.coeffs, x) - evaluate(f.coeffs, x))) < 1e-10


@given(N=st.integers(1, 10), seed=st.integers(0, 2**32 - 1), theta=st.floats(0, 7))
def test_phase_equivariance(N, seed, theta):
    f = random_field(N, np.random.default_rng(seed))
    z = np.exp(1j * theta)
    assert np.allclose(gauge(f * z).coeffs, gauge(f).coeffs * z, atol=1e-12)


@given(N=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
def test_J_has_zero_mean_and_derivative_h(N, seed):
    f = random_field(N, np.random.default_rng(seed))
    M = padded_size(N)
    j = J(f).values
    assert abs(np.mean(j)) < 1e-13
    jc = np.fft.fft(j) / M
    k = np.fft.fftfreq(M, 1 / M)
    dj = np.fft.ifft(1j * k * jc).real * M
    assert np.max(np.abs(dj - h(f).values)) < 1e-11


def test_truncation_residual_shrinks_with_n_out(rng):
    f = random_field(8, rng)
    r = [float(truncation_residual(f, n_out=k)) for k in (8, 16, 32, 64)]
    assert r[-1] < 1e-12 and r[0] >= r[1] >= r[2] - 1e-15
