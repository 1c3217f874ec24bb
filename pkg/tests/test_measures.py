import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlsgauge import functionals, measures as M
from dnlsgauge.gauge import GaugeSpec, gauge_inverse
from dnlsgauge.spectral import SpectralField, l2_norm_sq

from conftest import random_field
from oracles import partial_sum_variance


def test_rho_mode_variance():
    ens = M.sample_rho(M.MeasureConfig(8), seed=1, count=100_000)
    a3 = ens.samples.mode(3).real
    se = np.sqrt(2 / len(a3)) * 0.1
    assert abs(a3.var() - 0.1) < 4 * se
    e2 = np.abs(ens.samples.mode(2)) ** 2
    assert abs(e2.mean() - 2 / 5) < 4 * e2.std() / np.sqrt(len(e2))
    assert np.all(ens.log_weights == 0)


def test_rho_point_variance_matches_partial_sum():
    N = 64
    ens = M.sample_rho(M.MeasureConfig(N), seed=2, count=20_000)
    x = np.sum(ens.samples.coeffs, axis=-1).real
    want = partial_sum_variance(N)
    assert abs(x.var() - want) < 4 * want * np.sqrt(2 / len(x))
    assert abs(want - np.pi / np.tanh(np.pi)) < 0.04


def test_unitary_normalization_scales_variances():
    a = M.MeasureConfig(4).variances()
    b = M.MeasureConfig(4, normalization="unitary").variances()
    assert np.allclose(b, a / (2 * np.pi))


def test_reproducible_streams():
    c = M.MeasureConfig(6)
    full = M.sample_rho(c, seed=9, count=50).samples.coeffs
    part = M.sample_rho(c, seed=9, count=20, start=30).samples.coeffs
    assert np.array_equal(full[30:], part)
    assert not np.array_equal(full, M.sample_rho(c, seed=10, count=50).samples.coeffs)


def test_log_weight_examples():
    c = M.MeasureConfig(4, B=2.0)
    zero = SpectralField.zeros(4)
    assert M.log_weight_nu(zero, c) == 0 and M.log_weight_mu(zero, c) == 0
    k = 0.3 + 0.1j
    const = SpectralField.from_modes(4, {0: k})
    assert M.log_weight_nu(const, c) == pytest.approx(-np.pi * abs(k) ** 6 / 2)
    assert M.log_weight_mu(const, c) == pytest.approx(-np.pi * abs(k) ** 6 / 2)
    big = SpectralField.from_modes(4, {1: 1.0})
    assert M.log_weight_nu(big, c) == -np.inf and M.log_weight_mu(big, c) == -np.inf


@given(N=st.integers(1, 8), seed=st.integers(0, 2**32 - 1), B=st.floats(0.1, 10))
def test_weights_finite_exactly_inside_cutoff(N, seed, B):
    u = random_field(N, np.random.default_rng(seed), batch=(6,))
    c = M.MeasureConfig(N, B=B)
    inside = l2_norm_sq(u) <= B**2
    assert np.array_equal(np.isfinite(M.log_weight_nu(u, c)), inside)
    assert np.array_equal(np.isfinite(M.log_weight_mu(u, c)), inside)


@given(N=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_mu_nu_weight_consistency(N, seed):
    w = random_field(N, np.random.default_rng(seed))
    c = M.MeasureConfig(N)
    u = gauge_inverse(w, n_out=max(16 * N, 160))
    cu = M.MeasureConfig(u.N)
    # the truncated inverse gauge is exact to round-off, so the exponent difference
    # is the Girsanov term of the density chain
    diff = M.log_weight_mu(w, c) - M.log_weight_nu(u, cu)
    want = functionals.girsanov_exponent(w)
    assert abs(diff - want) < 1e-9 * (1 + abs(want) + abs(M.log_weight_nu(u, cu)))


def test_normalization_estimates():
    tiny = M.estimate_normalization(M.MeasureConfig(8, B=1e-3), seed=0, count=500)
    assert tiny.value == 0 and tiny.ess == 0 and "degenerate" in tiny.flags
    c = M.MeasureConfig(8, B=2.0, normalization="unitary")
    a = M.estimate_normalization(c, seed=11, count=10_000)
    b = M.estimate_normalization(c, seed=12, count=10_000)
    assert 0 < a.ess <= a.count
    assert M.combined_gap(a, b) < 3
    with pytest.raises(M.DegenerateStatistics):
        M.estimate_normalization(c, seed=0, count=50)


@pytest.mark.xfail(strict=True, reason="importance weights at N=32 are heavy-tailed; ESS stays far below 30%")
def test_normalization_ess_at_n32():
    c = M.MeasureConfig(32, B=1.0, normalization="unitary")
    est = M.estimate_normalization(c, seed=11, count=10_000)
    assert est.ess >= 0.3 * est.count


def test_expectation_basics():
    ens = M.sample_rho(M.MeasureConfig(4), seed=3, count=5000)
    three = M.expectation(ens, lambda u: np.full(len(u), 3.0))
    assert three.value == 3 and three.stderr == 0
    r = M.expectation(ens, M.obs_re_mode0)
    assert abs(r.value) < 3 * r.stderr
    assert 0 <= r.ess <= r.count
    with pytest.warns(RuntimeWarning):
        est = M.weighted_mean([1.0, 2.0, 3.0], [0.0, -50.0, -50.0], ess_floor=0.5)
    assert "low_ess" in est.flags


def test_nu_mass_reproducible_across_seeds():
    c = M.MeasureConfig(8, B=2.0, which="nu", normalization="unitary")
    a = M.expectation(M.sample_weighted(c, 21, 20_000), M.obs_mass)
    b = M.expectation(M.sample_weighted(c, 22, 20_000), M.obs_mass)
    assert M.combined_gap(a, b) < 3


def test_mcmc_reproducible_and_validated():
    c = M.MeasureConfig(4, B=3.0, which="nu", normalization="unitary")
    res = M.mcmc_sample_nu(c, seed=5, count=4000, step_scale=0.5, burn_in=200, thin=5, chains=20)
    assert res.ensemble.samples.coeffs.shape == (4000, 9)
    again = M.mcmc_sample_nu(c, seed=5, count=4000, step_scale=0.5, burn_in=200, thin=5, chains=20)
    assert np.array_equal(res.ensemble.samples.coeffs, again.ensemble.samples.coeffs)
    assert 0.1 <= res.acceptance <= 0.9
    with pytest.raises(ValueError):
        M.mcmc_sample_nu(c, seed=0, count=101, chains=10)
    with pytest.raises(ValueError):
        M.mcmc_sample_nu(c, seed=0, count=100, step_scale=0.0, chains=10)


def test_mcmc_with_unit_weight_reproduces_rho(monkeypatch):
    monkeypatch.setitem(M.LOG_WEIGHTS, "nu", lambda u, c: np.zeros(np.shape(u.coeffs)[:-1]))
    c = M.MeasureConfig(3, which="nu")
    with pytest.warns(RuntimeWarning, match="acceptance"):
        res = M.mcmc_sample_nu(c, seed=6, count=6000, step_scale=0.8, burn_in=100, thin=3, chains=30)
    assert res.acceptance == 1.0 and "tuning" in res.flags
    for n in (0, 1, -3):
        a = res.ensemble.samples.mode(n).real
        est = M.chain_mean(a**2, chains=30)
        assert abs(est.value - c.variances()[n + 3]) < 4 * est.stderr


def test_mcmc_agrees_with_importance_sampling():
    c = M.MeasureConfig(8, B=2.0, which="nu", normalization="unitary")
    chain = M.mcmc_sample_nu(c, seed=7, count=10_000, step_scale=0.3, burn_in=500, thin=5, chains=50)
    ens = M.sample_weighted(c, 8, 40_000)
    for name, F in M.PANEL.items():
        a, b = chain.mean(F), M.expectation(ens, F)
        assert M.combined_gap(a, b) < 3.5, name


def test_chain_mean_mask_and_errors():
    v = np.arange(40.0)
    est = M.chain_mean(v, chains=4, batches=5)
    assert est.value == pytest.approx(v.mean())
    masked = M.chain_mean(v, chains=4, batches=5, mask=v < 20)
    assert masked.value == pytest.approx(np.arange(20.0).mean()) and masked.count == 20
    with pytest.raises(ValueError):
        M.chain_mean(np.ones(10), chains=3)


def test_config_validation_and_round_trip():
    for bad in (dict(N=0), dict(N=2, B=0), dict(N=2, beta=-1), dict(N=2, which="pi"),
                dict(N=2, normalization="x")):
        with pytest.raises(ValueError):
            M.MeasureConfig(**bad)
    c = M.MeasureConfig(5, B=2.0, which="mu")
    assert M.MeasureConfig.from_dict(c.as_dict()) == c
    assert M.MeasureConfig.from_dict(M.MeasureConfig(5).as_dict()).B == np.inf


def test_ensemble_validation():
    f = SpectralField.zeros(2, (3,))
    with pytest.raises(ValueError):
        M.WeightedEnsemble(f, np.zeros(2), 0, M.MeasureConfig(2))
    with pytest.raises(ValueError):
        M.WeightedEnsemble(f, np.array([0, np.nan, 0]), 0, M.MeasureConfig(2))
    ens = M.WeightedEnsemble(f, np.array([0, -np.inf, 0]), 0, M.MeasureConfig(2))
    assert ens.ess == pytest.approx(2.0)
