import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlsgauge import change_of_measure as C
from dnlsgauge.bridge import BridgePath, bridge_log_density, sample_bridge
from dnlsgauge.gauge import GaugeSpec
from dnlsgauge.measures import DegenerateStatistics
from dnlsgauge.spectral import SizeError, SpectralField

from conftest import random_field

OFF = GaugeSpec(B=1e-6, mode="cutoff")  # every path lies above the threshold, so h = 0


def _circle(n):
    x = np.linspace(0, 2 * np.pi, n + 1)
    return BridgePath(np.exp(1j * x), 1.0)


def test_ito_integral_zero_and_size_error():
    p = sample_bridge(0, 64, seed=0)
    assert C.ito_integral(p, np.zeros(64)) == 0
    with pytest.raises(SizeError):
        C.ito_integral(p, np.zeros(10))


def test_ito_integral_on_circle_converges_first_order():
    errs = [abs(C.ito_integral(_circle(n), np.ones(n)) + 2 * np.pi) for n in (64, 128, 256, 512)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert errs[-1] < 1e-3
    # the error is O(1/n) at worst; for this smooth loop it is in fact O(1/n^2)
    assert np.all(ratios > 1.9)


@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-5, 5))
def test_ito_integral_linear_in_constant_h(seed, c):
    p = sample_bridge(0.3j, 32, seed=seed)
    z = p.values
    want = c * np.sum(np.imag(z[..., :-1] * np.conj(np.diff(z, axis=-1))), axis=-1)
    assert np.allclose(C.ito_integral(p, np.full(32, c)), want, rtol=1e-12, atol=1e-12)


def test_rn_density_cutoff_and_reproducibility():
    p = sample_bridge(0, 1024, seed=7, count=5)
    assert np.all(C.rn_log_density(p, OFF) == 0)
    a = C.rn_log_density(p)
    b = C.rn_log_density(sample_bridge(0, 1024, seed=7, count=5))
    assert np.all(np.isfinite(a)) and np.array_equal(a, b)


def test_exact_discrete_density_matches_gaussian_ratio():
    # the discrete gauge only shears phases, so law(G Z) has density p(G^{-1} y) / p(y)
    p = sample_bridge(0, 128, seed=3, count=6)
    y = C.gauge_path(p)
    J = C.path_phase(y)  # J depends on moduli only, and |G Z| = |Z|
    back = BridgePath(np.exp(1j * J) * y.values, 0)
    assert np.allclose(back.values, p.values, atol=1e-12)
    want = bridge_log_density(back) - bridge_log_density(y)
    assert np.allclose(C.exact_discrete_log_density(y), want, atol=1e-9)
    with pytest.raises(ValueError):
        C.exact_discrete_log_density(sample_bridge(1.0, 16, seed=0))


def test_novikov_with_null_gauge_is_exactly_one():
    est = C.novikov_estimate(2000, 256, OFF, seed=1)
    assert est.value == 1 and est.stderr == 0
    with pytest.raises(DegenerateStatistics):
        C.novikov_estimate(999, 256, OFF, seed=1)


def test_transport_with_null_gauge_has_zero_gaps():
    rep = C.verify_transport(2000, 256, OFF, seed=2)
    assert rep.max_gap == 0 and rep.passed()
    d = rep.as_dict()
    assert d["params"]["n_steps"] == 256 and len(d["observables"]) == len(C.PATH_PANEL)
    with pytest.raises(ValueError):
        C.verify_transport(2000, 258, OFF, seed=2)


def test_transport_with_constant_observable_is_novikov():
    spec = GaugeSpec(B=C.tune_cutoff(0.05, 256, seed=4), mode="cutoff")
    rep = C.verify_transport(4000, 256, spec, seed=4, observables={"one": lambda p, s: np.ones(len(p))})
    o = rep.observables[0]
    assert o.rhs.value == pytest.approx(rep.novikov.value)
    assert abs(rep.novikov.value - 1) < 3 * rep.novikov.stderr


def test_small_cutoff_transport_passes_and_sign_flip_is_caught():
    spec = GaugeSpec(B=C.tune_cutoff(0.05, 512, seed=9), mode="cutoff")
    frac = C.gauged_fraction(spec.B, 512, seed=9)
    assert 0.02 < frac < 0.1
    good = C.verify_transport(20_000, 512, spec, seed=9)
    assert good.passed(3.0)
    bad = C.verify_transport(20_000, 512, spec, seed=9, sign=-1)
    assert bad.max_gap > 5


def test_tune_cutoff_validates_fraction():
    with pytest.raises(ValueError):
        C.tune_cutoff(1.5, 64, seed=0)


def test_density_algebra_examples():
    const = SpectralField.from_modes(4, {0: 0.6 + 0.2j})
    assert abs(C.verify_density_algebra(const)) < 1e-12
    uni = SpectralField.from_modes(4, {2: 1.0})
    assert abs(C.verify_density_algebra(uni)) < 1e-10
    with pytest.raises(ValueError):
        C.verify_density_algebra(uni, GaugeSpec(B=0.5, mode="cutoff"))


def test_density_algebra_sweep(rng):
    w = random_field(12, rng, batch=(100,))
    r = C.verify_density_algebra(w, relative=True)
    assert np.max(np.abs(r)) < 1e-9


def test_report_json_round_trip():
    import json

    rep = C.verify_transport(1000, 64, OFF, seed=0)
    d = json.loads(rep.to_json())
    assert d["novikov"]["value"] == 1.0 and d["params"]["seed"] == 0
