"""Girsanov density of the gauged bridge law and its Monte Carlo verification.

For a bridge Z pinned at u_o the path gauge is G(Z) = exp(-iJ) Z with
J' = h = |Z|^2 - m(Z) (zero beyond the mass cutoff).  The claimed density of
law(G(Z)) with respect to the bridge law is exp(R(Z)) where

    R(Z) = Im int h Z dconj(Z) - 1/2 int h^2 |Z|^2 dx,

the stochastic integral taken in the Ito (left-point) sense.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import functionals
from .bridge import TWO_PI, BridgePath, sample_bridge
from .gauge import GaugeSpec, gauge_grid
from .measures import DegenerateStatistics, McEstimate, effective_sample_size
from .spectral import SizeError, SpectralField

MIN_COUNT = 1000


def path_h(path: BridgePath, spec: GaugeSpec = GaugeSpec()) -> np.ndarray:
    """h_k = |Z_k|^2 - m(Z) at the left nodes k < n, zeroed where the cutoff bites."""
    rho = np.abs(path.values[..., :-1]) ** 2
    m = rho.mean(axis=-1)
    return np.where(spec.active(m)[..., None], rho - m[..., None], 0.0)


def ito_integral(path: BridgePath, h_values) -> np.ndarray:
    """Im sum_k h_k Z_k conj(Z_{k+1} - Z_k).  h may list n or n + 1 nodes."""
    h_values = np.asarray(h_values, dtype=float)
    n = path.n_steps
    if h_values.shape[-1] == n + 1:
        h_values = h_values[..., :-1]
    if h_values.shape[-1] != n:
        raise SizeError(f"h has {h_values.shape[-1]} nodes, path has {n + 1}")
    z = path.values
    return np.sum(h_values * np.imag(z[..., :-1] * np.conj(np.diff(z, axis=-1))), axis=-1)


def _rn_parts(path: BridgePath, spec: GaugeSpec):
    h = path_h(path, spec)
    quad = 0.5 * np.sum(h**2 * np.abs(path.values[..., :-1]) ** 2, axis=-1) * path.dx
    return ito_integral(path, h), quad


def rn_log_density(path: BridgePath, spec: GaugeSpec = GaugeSpec(), sign: int = 1) -> np.ndarray:
    """log d law(G(Z)) / dP at Z.  ``sign=-1`` flips the stochastic integral (diagnostic)."""
    ito, quad = _rn_parts(path, spec)
    return sign * ito - quad


def path_phase(path: BridgePath, spec: GaugeSpec = GaugeSpec()) -> np.ndarray:
    """Discrete J: left-Riemann antiderivative of h with zero mean over the left nodes."""
    h = path_h(path, spec)
    H = np.zeros(path.values.shape)
    np.cumsum(h * path.dx, axis=-1, out=H[..., 1:])
    return H - H[..., :-1].mean(axis=-1, keepdims=True)


def gauge_path(path: BridgePath, spec: GaugeSpec = GaugeSpec()) -> BridgePath:
    J = path_phase(path, spec)
    g = np.exp(-1j * J) * path.values
    return BridgePath(g, g[..., 0])


def exact_discrete_log_density(path: BridgePath, spec: GaugeSpec = GaugeSpec()) -> np.ndarray:
    """Exact log-density of law(gauge_path(Z)) against the discrete bridge, for u_o = 0.

    The discrete gauge shears phases by an amount depending on moduli only, so
    its Jacobian in polar coordinates is one and the density is the ratio of
    Gaussian bridge densities at G^{-1}(y) and y.
    """
    if np.any(np.abs(path.values[..., 0]) > 0):
        raise ValueError("exact discrete density needs paths pinned at 0")
    J = path_phase(path, spec)
    delta = np.diff(J, axis=-1)
    z = path.values
    return np.sum(np.real(z[..., 1:] * np.conj(z[..., :-1]) * np.expm1(1j * delta)), axis=-1) / path.dx


# observables ----------------------------------------------------------------

def _below(path: BridgePath, spec: GaugeSpec):
    return (path.mass() <= spec.mass_threshold).astype(float)


def obs_cos_mid(path, spec):
    return np.cos(path.values[..., path.n_steps // 2].real)


def obs_exp_norm(path, spec):
    return np.exp(-np.sum(np.abs(path.values[..., :-1]) ** 2, axis=-1) * path.dx)


def obs_im_quarter(path, spec):
    return path.values[..., path.n_steps // 4].imag * _below(path, spec)


def obs_mass_capped(path, spec):
    return np.minimum(path.mass(), 1.0)


def obs_winding(path, spec):
    """Bounded signed area swept by the path; odd under complex conjugation."""
    z = path.values
    area = np.sum(np.imag(z[..., :-1] * np.conj(np.diff(z, axis=-1))), axis=-1)
    return np.tanh(area) * _below(path, spec)


PATH_PANEL = {
    "cos_re_mid": obs_cos_mid,
    "exp_neg_norm": obs_exp_norm,
    "im_quarter_below": obs_im_quarter,
    "mass_capped": obs_mass_capped,
    "winding_below": obs_winding,
}


# Monte Carlo ----------------------------------------------------------------

def _plain(values) -> McEstimate:
    v = np.asarray(values, dtype=float)
    n = len(v)
    return McEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(n)), n, float(n))


def _exp_mean(log_values, factor=None) -> McEstimate:
    """Mean and stderr of factor * exp(log_values) computed with a common shift."""
    lv = np.asarray(log_values, dtype=float)
    n = len(lv)
    shift = float(np.max(lv))
    e = np.exp(lv - shift)
    x = e if factor is None else np.asarray(factor, dtype=float) * e
    scale = np.exp(shift)
    return McEstimate(float(x.mean() * scale), float(x.std(ddof=1) / np.sqrt(n) * scale), n,
                      effective_sample_size(lv))


def _check_count(count: int):
    if count < MIN_COUNT:
        raise DegenerateStatistics(f"need count >= {MIN_COUNT}, got {count}")


def _bridges(count, n_steps, seed, u_o, chunk):
    for start in range(0, count, chunk):
        c = min(chunk, count - start)
        u = u_o if np.ndim(u_o) == 0 else np.asarray(u_o)[start:start + c]
        yield sample_bridge(u, n_steps, seed, c, start)


def novikov_estimate(count: int, n_steps: int, spec: GaugeSpec, seed: int, u_o=0.0,
                     sign: int = 1, chunk: int = 2000) -> McEstimate:
    """Monte Carlo mean of exp(R) over bridges; the density claim requires it to equal 1."""
    _check_count(count)
    R = np.concatenate([rn_log_density(p, spec, sign) for p in _bridges(count, n_steps, seed, u_o, chunk)])
    est = _exp_mean(R)
    if R.max() > np.log(count):
        est.flags.append("extreme_weight")
        warnings.warn(f"max log-density {R.max():.2f} exceeds log(count)", RuntimeWarning)
    return est


@dataclass
class ObservableGap:
    name: str
    lhs: McEstimate
    rhs: McEstimate
    sigma_gap: float

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs.as_dict(), "rhs": self.rhs.as_dict(),
                "sigma_gap": self.sigma_gap}


@dataclass
class RnReport:
    novikov: McEstimate
    observables: list
    n_steps: int
    count: int
    spec: GaugeSpec
    params: dict = field(default_factory=dict)

    @property
    def max_gap(self) -> float:
        return max([self.novikov_gap] + [o.sigma_gap for o in self.observables])

    @property
    def novikov_gap(self) -> float:
        se = self.novikov.stderr
        d = abs(self.novikov.value - 1.0)
        return 0.0 if d == 0 else (float(d / se) if se > 0 else np.inf)

    def rms_gap(self) -> float:
        g = np.array([o.sigma_gap for o in self.observables])
        return float(np.sqrt(np.mean(g**2)))

    def passed(self, threshold: float = 3.0) -> bool:
        return self.max_gap <= threshold

    def as_dict(self) -> dict:
        return {
            "novikov": self.novikov.as_dict(),
            "observables": [o.as_dict() for o in self.observables],
            "params": {"n_steps": self.n_steps, "count": self.count,
                       "B": None if not np.isfinite(self.spec.B) else self.spec.B,
                       "mode": self.spec.mode, **self.params},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


def _gap(a: McEstimate, b: McEstimate) -> float:
    se = np.hypot(a.stderr, b.stderr)
    d = abs(a.value - b.value)
    if d == 0:
        return 0.0
    return float(d / se) if se > 0 else np.inf


def verify_transport(count: int, n_steps: int, spec: GaugeSpec, seed: int, observables=None,
                     u_o=0.0, sign: int = 1, chunk: int = 2000) -> RnReport:
    """Compare E[F(G(Z))] with E[F(Z) exp(R(Z))] on common bridge samples."""
    _check_count(count)
    if n_steps % 4:
        raise ValueError("n_steps must be divisible by 4 for the point observables")
    observables = PATH_PANEL if observables is None else observables
    R, lhs, rhs = [], {k: [] for k in observables}, {k: [] for k in observables}
    for p in _bridges(count, n_steps, seed, u_o, chunk):
        R.append(rn_log_density(p, spec, sign))
        g = gauge_path(p, spec)
        for name, F in observables.items():
            lhs[name].append(F(g, spec))
            rhs[name].append(F(p, spec))
    R = np.concatenate(R)
    nov = _exp_mean(R)
    if R.max() > np.log(count):
        nov.flags.append("extreme_weight")
    gaps = []
    for name in observables:
        a = _plain(np.concatenate(lhs[name]))
        b = _exp_mean(R, np.concatenate(rhs[name]))
        gaps.append(ObservableGap(name, a, b, _gap(a, b)))
    return RnReport(nov, gaps, n_steps, count, spec, {"seed": seed, "sign": sign})


def gauged_fraction(B: float, n_steps: int, seed: int, count: int = 4000, u_o=0.0) -> float:
    m = np.concatenate([p.mass() for p in _bridges(count, n_steps, seed, u_o, 2000)])
    return float(np.mean(m <= B**2 / TWO_PI))


def tune_cutoff(fraction: float, n_steps: int, seed: int, count: int = 4000, u_o=0.0) -> float:
    """B such that about ``fraction`` of bridges fall under the mass threshold.

    The pilot uses stream indices far from those of the main run.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    start = 1 << 40
    m = np.concatenate([sample_bridge(u_o, n_steps, seed, min(2000, count - s), start + s).mass()
                        for s in range(0, count, 2000)])
    return float(np.sqrt(TWO_PI * np.quantile(m, fraction)))


# density algebra on fields ---------------------------------------------------

def _nonquad_on_grid(u: np.ndarray) -> np.ndarray:
    M = u.shape[-1]
    k = np.fft.fftfreq(M, 1.0 / M)
    ux = np.fft.ifft(1j * k * np.fft.fft(u, axis=-1), axis=-1)
    rho = np.abs(u) ** 2
    w = TWO_PI / M
    return w * np.sum(1.5 * np.imag(rho * u * np.conj(ux)) + 0.5 * rho**3, axis=-1)


def density_algebra_terms(w: SpectralField, spec: GaugeSpec = GaugeSpec(), M: int | None = None):
    """The three pieces of the chain: N(G^{-1}w) (by actually ungauging), R(w), gauged N(w)."""
    M = M or functionals.fine_grid(w.N, 16)
    u = gauge_grid(w, spec, M, sign=+1)
    return _nonquad_on_grid(u), functionals.girsanov_exponent(w), functionals.gauged_nonquad(w)


def verify_density_algebra(w: SpectralField, spec: GaugeSpec = GaugeSpec(), M: int | None = None,
                           relative: bool = False):
    """Residual of -N(G^{-1}w)/2 + R(w) + (gauged N)(w)/2, which should vanish.

    With ``relative`` the residual is divided by 1 + the sum of term magnitudes.
    """
    m = functionals.mass(w)
    if np.any(~spec.active(m)):
        raise ValueError("field mass above the cutoff threshold")
    a, r, b = density_algebra_terms(w, spec, M)
    res = -0.5 * a + r + 0.5 * b
    if relative:
        return res / (1 + 0.5 * np.abs(a) + np.abs(r) + 0.5 * np.abs(b))
    return res


# gauged Gibbs measure at finite N --------------------------------------------

@dataclass
class MeasureTransportReport:
    N: int
    count: int
    rows: list
    nu: dict
    mu: dict
    params: dict = field(default_factory=dict)

    @property
    def max_gap(self) -> float:
        return max(r["sigma_gap"] for r in self.rows)

    def rms_gap(self) -> float:
        return float(np.sqrt(np.mean([r["sigma_gap"] ** 2 for r in self.rows])))

    def passed(self, threshold: float = 3.0) -> bool:
        return self.max_gap <= threshold

    def as_dict(self) -> dict:
        return {"N": self.N, "count": self.count, "rows": self.rows, "nu": self.nu, "mu": self.mu,
                "params": self.params}


def verify_gauged_measure(config, seed: int, count: int, observables=None, n_out_factor: int = 4,
                          chains: int = 50, step_scale: float = 0.3, burn_in: int = 1000, thin: int = 10,
                          chunk: int = 2000) -> MeasureTransportReport:
    """E_nu[F(G u)] against E_mu[F] at cutoff N.

    nu is sampled by Metropolis (its importance weights against rho_N are too
    uneven to be useful); mu by self-normalised importance sampling.  G(u) is
    kept to n_out_factor * N modes before F is applied.  The gauge uses the
    mass cutoff of ``config``.
    """
    from dataclasses import replace

    from . import measures
    from .gauge import gauge

    _check_count(count)
    observables = measures.PANEL if observables is None else observables
    spec = GaugeSpec(config.B, "cutoff") if np.isfinite(config.B) else GaugeSpec()
    chain = measures.mcmc_sample_nu(replace(config, which="nu"), seed, count, step_scale, burn_in, thin, chains)
    u = chain.ensemble.samples
    n_out = n_out_factor * config.N
    gu = SpectralField(np.concatenate([gauge(u[s:s + chunk], spec, n_out).coeffs for s in range(0, count, chunk)]))
    ens = measures.sample_weighted(replace(config, which="mu"), seed, count)
    rows = []
    for name, F in observables.items():
        a = measures.chain_mean(F(gu), chains)
        b = measures.expectation(ens, F)
        rows.append({"name": name, "nu_gauged": a.value, "nu_stderr": a.stderr,
                     "mu": b.value, "mu_stderr": b.stderr, "sigma_gap": measures.combined_gap(a, b)})
    return MeasureTransportReport(
        config.N, count, rows,
        {"acceptance": chain.acceptance, "chains": chains, "flags": chain.flags},
        {"ess": ens.ess, "inside": float(np.mean(np.isfinite(ens.log_weights)))},
        {"seed": seed, **config.as_dict()},
    )
