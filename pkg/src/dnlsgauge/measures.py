"""Finite-dimensional Gaussian measure rho_N and the weighted measures nu, mu.

Expectations under nu and mu are computed by self-normalised importance
sampling from rho_N.  The weights exp(-N(u)/2) are unbounded above, so no
rejection envelope exists; effective sample size is reported with every
estimate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import functionals, rng
from .spectral import SpectralField, coeffs_to_grid, modes

log = logging.getLogger(__name__)

# variance of Re(c_n) is scale / (beta (1 + n^2)); "unitary" puts the 2pi of
# the Fourier normalisation into the coefficients so the Gaussian exponent is
# exactly -(1/2) int (|u|^2 + |u_x|^2) dx in physical space
NORMALIZATIONS = {"coefficient": 1.0, "unitary": 1.0 / (2 * np.pi)}


class DegenerateStatistics(RuntimeError):
    """Too few samples, or weights too concentrated, for a meaningful estimate."""


@dataclass(frozen=True)
class MeasureConfig:
    N: int
    B: float = np.inf
    beta: float = 1.0
    which: str = "rho"
    normalization: str = "coefficient"

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("N must be >= 1")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.which not in ("rho", "nu", "mu"):
            raise ValueError(f"unknown measure {self.which!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def variances(self) -> np.ndarray:
        n = modes(self.N)
        return NORMALIZATIONS[self.normalization] / (self.beta * (1.0 + n**2))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["B"] = None if not np.isfinite(self.B) else self.B
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureConfig":
        d = dict(d)
        if d.get("B") is None:
            d["B"] = np.inf
        return cls(**d)


@dataclass
class McEstimate:
    value: float
    stderr: float
    count: int
    ess: float
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "count": self.count,
                "ess": self.ess, "flags": list(self.flags)}


@dataclass
class WeightedEnsemble:
    samples: SpectralField
    log_weights: np.ndarray
    seed: int
    config: MeasureConfig
    start: int = 0

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.samples.coeffs.ndim != 2 or len(self.samples) != len(self.log_weights):
            raise ValueError("samples and log_weights must have equal length")
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("log weights must be finite or -inf")

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def ess(self) -> float:
        return effective_sample_size(self.log_weights)


def effective_sample_size(log_weights) -> float:
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        return 0.0
    return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))


def rho_coeffs(config: MeasureConfig, seed: int, indices) -> np.ndarray:
    """Coefficients of rho_N samples for the given stream indices."""
    z = rng.normals(seed, indices, (2, 2 * config.N + 1), family=rng.RHO)
    sd = np.sqrt(config.variances())
    return (z[:, 0] + 1j * z[:, 1]) * sd


def sample_rho(config: MeasureConfig, seed: int, count: int, start: int = 0) -> WeightedEnsemble:
    idx = np.arange(start, start + count)
    c = rho_coeffs(config, seed, idx)
    return WeightedEnsemble(SpectralField(c), np.zeros(count), seed, replace(config, which="rho"), start)


def _inside(u: SpectralField, config: MeasureConfig):
    from .spectral import l2_norm_sq

    return l2_norm_sq(u) <= config.B**2


def log_weight_nu(u: SpectralField, config: MeasureConfig):
    lw = -0.5 * config.beta * functionals.nonquad_N(u)
    return np.where(_inside(u, config), lw, -np.inf)


def log_weight_mu(w: SpectralField, config: MeasureConfig):
    lw = -0.5 * config.beta * functionals.gauged_nonquad(w)
    return np.where(_inside(w, config), lw, -np.inf)


LOG_WEIGHTS = {"rho": lambda u, c: np.zeros(np.shape(u.coeffs)[:-1]),
               "nu": log_weight_nu, "mu": log_weight_mu}


def sample_weighted(config: MeasureConfig, seed: int, count: int, start: int = 0,
                    chunk: int = 2048) -> WeightedEnsemble:
    """rho_N draws carrying the log-weights of ``config.which``."""
    ens = sample_rho(config, seed, count, start)
    fn = LOG_WEIGHTS[config.which]
    lw = np.concatenate([fn(ens.samples[i:i + chunk], config) for i in range(0, count, chunk)]) \
        if count else np.zeros(0)
    return WeightedEnsemble(ens.samples, lw, seed, config, start)


def estimate_normalization(config: MeasureConfig, seed: int, count: int) -> McEstimate:
    """Plain Monte Carlo estimate of Z = E_rho[chi exp(-N/2)] with jackknife error."""
    if count < 100:
        raise DegenerateStatistics("need at least 100 samples")
    ens = sample_weighted(replace(config, which="nu"), seed, count)
    lw = ens.log_weights
    if not np.any(np.isfinite(lw)):
        return McEstimate(0.0, 0.0, count, 0.0, ["degenerate"])
    n = len(lw)
    shift = np.max(lw[np.isfinite(lw)])
    w = np.exp(lw - shift)
    total = w.sum()
    loo = (total - w) / (n - 1)
    jk_var = (n - 1) / n * np.sum((loo - loo.mean()) ** 2)
    value = total / n * np.exp(shift)
    stderr = float(np.sqrt(jk_var) * np.exp(shift))
    return McEstimate(float(value), stderr, n, effective_sample_size(lw))


def expectation(ensemble: WeightedEnsemble, observable, reweight=None, ess_floor: float = 0.0,
                chunk: int = 2048) -> McEstimate:
    """Self-normalised importance estimate of E[observable] with delta-method error.

    ``reweight`` optionally adds a log-weight computed from the samples.
    """
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    lw = ensemble.log_weights.copy()
    n = len(lw)
    vals = np.concatenate([np.asarray(observable(ensemble.samples[i:i + chunk]), dtype=float)
                           for i in range(0, n, chunk)])
    if reweight is not None:
        lw = lw + np.concatenate([reweight(ensemble.samples[i:i + chunk]) for i in range(0, n, chunk)])
    return weighted_mean(vals, lw, ess_floor)


def weighted_mean(values, log_weights, ess_floor: float = 0.0) -> McEstimate:
    vals = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    n = len(vals)
    finite = np.isfinite(lw)
    if not np.any(finite):
        return McEstimate(float("nan"), float("nan"), n, 0.0, ["degenerate"])
    w = np.zeros(n)
    w[finite] = np.exp(lw[finite] - np.max(lw[finite]))
    W = w.sum()
    value = float(np.sum(w * vals) / W)
    stderr = float(np.sqrt(np.sum(w**2 * (vals - value) ** 2)) / W)
    ess = float(W**2 / np.sum(w**2))
    flags = []
    if ess < ess_floor * n:
        flags.append("low_ess")
        warnings.warn(f"effective sample size {ess:.1f} below floor {ess_floor * n:.1f}", RuntimeWarning)
    return McEstimate(value, stderr, n, ess, flags)


def combined_gap(a: McEstimate, b: McEstimate) -> float:
    """|a - b| in units of the combined standard error."""
    se = np.hypot(a.stderr, b.stderr)
    d = abs(a.value - b.value)
    if se == 0:
        return 0.0 if d == 0 else np.inf
    return float(d / se)


def chain_mean(values, chains: int = 1, batches: int = 10, mask=None) -> McEstimate:
    """Mean of correlated MCMC output (chain-major) with a batch-means standard error.

    ``mask`` drops individual states; each batch then averages its kept states.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    if chains < 1 or n % chains:
        raise ValueError("sample count must be a multiple of the chain count")
    keep = np.ones(n, dtype=float) if mask is None else np.asarray(mask, dtype=float)
    per = n // chains
    b = min(batches, per)
    use = per - per % b

    def blocks(a):
        return a.reshape(chains, per)[:, :use].reshape(chains * b, use // b).sum(axis=1)

    cnt = blocks(keep)
    ok = cnt > 0
    means = blocks(v * keep)[ok] / cnt[ok]
    value = float(np.sum(v * keep) / np.sum(keep))
    se = float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else float("nan")
    kept = int(np.sum(keep))
    iid = np.sum(keep * (v - value) ** 2) / kept / kept
    ess = float(kept * iid / se**2) if se > 0 else float(kept)
    return McEstimate(value, se, kept, min(ess, float(kept)))


# standard observable panel -------------------------------------------------

def obs_mass(u: SpectralField):
    return functionals.mass(u)


def obs_quartic(u: SpectralField):
    from .spectral import padded_size

    v = coeffs_to_grid(u.coeffs, padded_size(u.N))
    return 2 * np.pi * np.mean(np.abs(v) ** 4, axis=-1)


def obs_re_mode0(u: SpectralField):
    return u.mode(0).real


def obs_cos_point(u: SpectralField):
    return np.cos(np.sum(u.coeffs, axis=-1).real)


PANEL = {
    "mass": obs_mass,
    "quartic": obs_quartic,
    "re_mode0": obs_re_mode0,
    "cos_re_u0": obs_cos_point,
}


# Metropolis sampling -------------------------------------------------------

@dataclass
class ChainResult:
    ensemble: WeightedEnsemble
    acceptance: float
    flags: list
    chains: int = 1

    def mean(self, observable, batches: int = 10) -> McEstimate:
        return chain_mean(observable(self.ensemble.samples), self.chains, batches)


def mcmc_sample_nu(config: MeasureConfig, seed: int, count: int, step_scale: float = 0.3,
                   burn_in: int = 500, thin: int = 10, chains: int = 16) -> ChainResult:
    """Random-walk Metropolis targeting chi exp(-N/2) relative to rho_N.

    Proposals are autoregressive, u' = sqrt(1 - s^2) u + s xi with xi ~ rho_N,
    which leaves rho_N invariant, so only the weight ratio enters the
    acceptance test.  ``chains`` independent chains run side by side, each on
    its own stream; ``count`` states are emitted in total.
    """
    if not 0 < step_scale <= 1:
        raise ValueError("step_scale must lie in (0, 1]")
    if count < chains or count % chains:
        raise ValueError("count must be a positive multiple of the chain count")
    which = config.which if config.which in ("nu", "mu") else "nu"
    weight = LOG_WEIGHTS[which]
    per_chain = count // chains
    n_steps = burn_in + per_chain * thin
    N = config.N
    sd = np.sqrt(config.variances())
    gens = [rng.stream(seed, c, family=rng.MCMC) for c in range(chains)]
    state = np.zeros((chains, 2 * N + 1), dtype=complex)
    cur = weight(SpectralField(state), config)
    a = np.sqrt(1 - step_scale**2)
    kept = []
    accepted = 0
    block = 64
    for start in range(0, n_steps, block):
        nb = min(block, n_steps - start)
        noise = np.stack([g.standard_normal((nb, 2, 2 * N + 1)) for g in gens], axis=1)
        unif = np.stack([g.random(nb) for g in gens], axis=1)
        for j in range(nb):
            step = start + j
            xi = (noise[j, :, 0] + 1j * noise[j, :, 1]) * sd
            prop = a * state + step_scale * xi
            lw = weight(SpectralField(prop), config)
            with np.errstate(invalid="ignore"):
                ok = np.log(unif[j]) < lw - cur
            state = np.where(ok[:, None], prop, state)
            cur = np.where(ok, lw, cur)
            if step >= burn_in:
                accepted += int(ok.sum())
                if (step - burn_in) % thin == thin - 1:
                    kept.append(state.copy())
    samples = np.stack(kept, axis=1).reshape(-1, 2 * N + 1)
    rate = accepted / max(1, (n_steps - burn_in) * chains)
    flags = []
    if not 0.1 <= rate <= 0.9:
        flags.append("tuning")
        warnings.warn(f"Metropolis acceptance rate {rate:.3f} outside [0.1, 0.9]", RuntimeWarning)
    ens = WeightedEnsemble(SpectralField(samples), np.zeros(len(samples)), seed, replace(config, which=which))
    return ChainResult(ens, rate, flags, chains)
