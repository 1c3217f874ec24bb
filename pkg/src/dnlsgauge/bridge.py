"""Complex Brownian bridges on [0, 2pi], the conformal clock, and Cameron-Martin shifts.

Real and imaginary parts are independent standard real bridges (unit
diffusion per component), so Cov(Re Z(x), Re Z(y)) = min(x, y) - xy/2pi.
Paths are stored on the grid x_k = 2 pi k / n, k = 0..n, with both end
values included; leading axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng
from .spectral import SizeError

TWO_PI = 2 * np.pi
NEAR_ZERO = 1e-6


@dataclass(frozen=True)
class BridgePath:
    values: np.ndarray
    u_o: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape[-1] < 3:
            raise ValueError("need n_steps >= 2")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "u_o", np.asarray(self.u_o, dtype=complex))

    @property
    def n_steps(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def dx(self) -> float:
        return TWO_PI / self.n_steps

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dx

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, idx) -> "BridgePath":
        u = self.u_o if self.u_o.ndim == 0 else self.u_o[idx]
        return BridgePath(self.values[idx], u)

    def at(self, x: float) -> np.ndarray:
        """Values at a grid point x (must coincide with a node)."""
        k = x / self.dx
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"x = {x} is not a grid node")
        return self.values[..., int(round(k))]

    def mass(self):
        """Discrete m(Z) = (1/2pi) int |Z|^2 dx by the periodic trapezoid rule."""
        return np.mean(np.abs(self.values[..., :-1]) ** 2, axis=-1)


def _walks(seed: int, indices, n_steps: int, family: int) -> np.ndarray:
    z = rng.normals(seed, indices, (2, n_steps), family=family) * np.sqrt(TWO_PI / n_steps)
    inc = z[:, 0] + 1j * z[:, 1]
    out = np.zeros((len(inc), n_steps + 1), dtype=complex)
    np.cumsum(inc, axis=-1, out=out[:, 1:])
    return out


def sample_bridge(u_o, n_steps: int, seed: int, count: int = 1, start: int = 0) -> BridgePath:
    """``count`` bridges pinned at u_o; path i uses stream (seed, start + i)."""
    if n_steps < 2:
        raise ValueError("need n_steps >= 2")
    idx = np.arange(start, start + count)
    b = _walks(seed, idx, n_steps, rng.BRIDGE)
    x = np.arange(n_steps + 1) * (TWO_PI / n_steps)
    u_o = np.asarray(u_o, dtype=complex)
    z = b - (x / TWO_PI) * b[:, -1:] + np.reshape(u_o, u_o.shape + (1,))
    z[:, 0] = u_o
    z[:, -1] = u_o
    return BridgePath(z, u_o)


def sample_motion(n_steps: int, seed: int, count: int = 1, start: int = 0, b0: complex = 1.0) -> np.ndarray:
    """Complex Brownian motion on [0, 2pi] started at b0 (unit diffusion per component)."""
    return _walks(seed, np.arange(start, start + count), n_steps, rng.MOTION) + b0


def sample_endpoints(seed: int, count: int, variance: float, start: int = 0) -> np.ndarray:
    """Centred complex Gaussian endpoint values with the given per-component variance."""
    z = rng.normals(seed, np.arange(start, start + count), (2,), family=rng.BRIDGE + 100)
    return np.sqrt(variance) * (z[:, 0] + 1j * z[:, 1])


def rho_bridge_weight(path: BridgePath):
    """log d rho(.|u_o)/dP_{u_o} up to a constant: -(1/2) int |Z|^2 dx."""
    return -0.5 * np.sum(np.abs(path.values[..., :-1]) ** 2, axis=-1) * path.dx


def bridge_log_density(path: BridgePath):
    """Gaussian log-density of the interior nodes of the discrete bridge, without constant."""
    d = np.diff(path.values, axis=-1)
    return -0.5 * np.sum(np.abs(d) ** 2, axis=-1) / path.dx


@dataclass(frozen=True)
class TimeChangedPath:
    s: np.ndarray
    W: np.ndarray
    S: np.ndarray
    near_zero: np.ndarray
    coarse: np.ndarray


def unwrapped_phase(values: np.ndarray):
    """Continuous argument along the path and a flag for steps turning by more than pi/2."""
    ratio = values[..., 1:] / values[..., :-1]
    turn = np.angle(ratio)
    phase = np.concatenate([np.angle(values[..., :1]), np.angle(values[..., :1]) + np.cumsum(turn, axis=-1)], axis=-1)
    return phase, np.any(np.abs(turn) > np.pi / 2, axis=-1)


def time_change(values, dx: float | None = None, floor: float = NEAR_ZERO) -> TimeChangedPath:
    """Clock s(x) = int dx/|Z|^2 (left Riemann) and W = log Z along it.

    Accepts a BridgePath or a raw array of path values on the 2pi grid.
    Paths dipping below ``floor`` in modulus are flagged, not dropped.
    """
    if isinstance(values, BridgePath):
        dx = values.dx
        values = values.values
    values = np.asarray(values, dtype=complex)
    if dx is None:
        dx = TWO_PI / (values.shape[-1] - 1)
    mod = np.abs(values)
    near = np.any(mod < floor, axis=-1)
    safe = np.where(mod < floor, floor, mod)
    ds = dx / safe[..., :-1] ** 2
    s = np.concatenate([np.zeros(values.shape[:-1] + (1,)), np.cumsum(ds, axis=-1)], axis=-1)
    phase, coarse = unwrapped_phase(np.where(mod < floor, floor, values))
    W = np.log(safe) + 1j * phase
    return TimeChangedPath(s, W, s[..., -1], near, coarse)


def inverse_time_change(tc: TimeChangedPath) -> np.ndarray:
    """x(s) = int |exp W|^2 ds, evaluated at the clock nodes."""
    ds = np.diff(tc.s, axis=-1)
    dx = np.exp(2 * tc.W.real[..., :-1]) * ds
    return np.concatenate([np.zeros(tc.s.shape[:-1] + (1,)), np.cumsum(dx, axis=-1)], axis=-1)


def cameron_martin_log_density(X, k, s=None):
    """log of the Cameron-Martin density for the shift k, evaluated on the path X.

    Discrete form of int k' dX - (1/2) int |k'|^2 ds with left increments.
    """
    X = np.asarray(X, dtype=float)
    k = np.asarray(k, dtype=float)
    if X.shape[-1] != k.shape[-1]:
        raise SizeError("path and shift live on different grids")
    if s is None:
        s = np.linspace(0.0, 1.0, X.shape[-1])
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != X.shape[-1]:
        raise SizeError("clock grid does not match the path")
    dk = np.diff(k, axis=-1)
    ds = np.diff(s, axis=-1)
    return np.sum(dk / ds * np.diff(X, axis=-1), axis=-1) - 0.5 * np.sum(dk**2 / ds, axis=-1)


def conformal_gaussianity_check(count: int, n_steps: int, seed: int, s_max: float = 0.25,
                                n_incr: int = 10, floor: float = NEAR_ZERO, chunk: int = 500) -> dict:
    """Test that log B of a complex Brownian motion (B(0) = 1) is Brownian in the clock s.

    W = log B is read off at the deterministic clock values s = j s_max / n_incr
    by linear interpolation between grid nodes; its increments, divided by
    the standard deviation a Brownian path would give the interpolated
    increment, should be independent standard normals in both the real and
    the imaginary part.  Paths that hit the modulus floor, turn by
    more than pi/2 in one step before s_max, or never reach s_max are excluded
    and counted.
    """
    if count < 1000:
        raise ValueError("need count >= 1000")
    targets = np.linspace(0.0, s_max, n_incr + 1)
    z1, z2, excluded = [], [], 0
    for start in range(0, count, chunk):
        B = sample_motion(n_steps, seed, min(chunk, count - start), start)
        tc = time_change(B, floor=floor)
        # first node at or beyond each target; interpolate from the node before it
        hi = np.clip(np.stack([np.sum(tc.s < t, axis=-1) for t in targets], axis=-1), 1, n_steps)
        lo = hi - 1
        r = np.arange(len(B))[:, None]
        s0, s1 = tc.s[r, lo], tc.s[r, hi]
        frac = np.clip((targets - s0) / (s1 - s0), 0.0, 1.0)
        W = tc.W[r, lo] + frac * (tc.W[r, hi] - tc.W[r, lo])
        turn = np.abs(np.angle(B[:, 1:] / np.where(B[:, :-1] == 0, 1, B[:, :-1])))
        window = np.arange(n_steps)[None, :] < hi[:, -1:]
        coarse = np.any((turn > np.pi / 2) & window, axis=-1)
        ok = ~tc.near_zero & ~coarse & (tc.S >= s_max)
        excluded += int(np.sum(~ok))
        # variance of an increment between interpolated points of a Brownian path
        delta = s1 - s0
        lost = delta * frac * (1 - frac)
        same = hi[:, 1:] == hi[:, :-1]
        var = np.where(same, (frac[:, 1:] - frac[:, :-1]) ** 2 * delta[:, 1:],
                       s_max / n_incr - lost[:, 1:] - lost[:, :-1])
        d = np.diff(W, axis=-1)[ok] / np.sqrt(var[ok])
        z1.append(d.real.ravel())
        z2.append(d.imag.ravel())
    if count - excluded < 100:
        raise RuntimeError("too few usable paths after exclusions")
    z1, z2 = np.concatenate(z1), np.concatenate(z2)
    n = z1.size
    var1, var2 = np.var(z1), np.var(z2)
    corr = float(np.corrcoef(z1, z2)[0, 1])
    return {
        "count": count,
        "used": count - excluded,
        "excluded": excluded,
        "increments": n,
        "mean1": float(np.mean(z1)), "mean1_se": float(np.std(z1) / np.sqrt(n)),
        "mean2": float(np.mean(z2)), "mean2_se": float(np.std(z2) / np.sqrt(n)),
        "var_ratio1": float(var1), "var_ratio1_se": float(np.std(z1**2) / np.sqrt(n)),
        "var_ratio2": float(var2), "var_ratio2_se": float(np.std(z2**2) / np.sqrt(n)),
        "corr": corr, "corr_se": float(1 / np.sqrt(n)),
        "ks_p1": float(stats.kstest(z1, "norm").pvalue),
        "ks_p2": float(stats.kstest(z2, "norm").pvalue),
    }


# exact finite-dimensional oracles ------------------------------------------

def bridge_covariance(s) -> np.ndarray:
    """Covariance min(s_i, s_j) - s_i s_j / S of a real bridge pinned at 0, interior nodes."""
    s = np.asarray(s, dtype=float)
    t = s[1:-1]
    return np.minimum.outer(t, t) - np.outer(t, t) / s[-1]


def cameron_martin_oracle(X, k, s=None) -> float:
    """log p(X - k) - log p(X) for the discrete real bridge pinned at 0, via its covariance."""
    X = np.asarray(X, dtype=float)
    k = np.asarray(k, dtype=float)
    s = np.linspace(0.0, 1.0, X.shape[-1]) if s is None else np.asarray(s, dtype=float)
    mvn = stats.multivariate_normal(mean=np.zeros(len(s) - 2), cov=bridge_covariance(s))
    return float(mvn.logpdf(X[1:-1] - k[1:-1]) - mvn.logpdf(X[1:-1]))


def rho_conditional_log_density(path: BridgePath) -> np.ndarray:
    """Discretised rho(.|u_o) log-density of the interior nodes, from its precision matrix.

    Exponent -(1/2) sum_k (|Z_{k+1} - Z_k|^2 / dx + |Z_k|^2 dx), written as
    -(1/2) z^T Q z + Re(b^* z) + const with Q = tridiag(-1, 2, -1)/dx + dx I.
    """
    n, d = path.n_steps, path.dx
    Q = (np.diag(np.full(n - 1, 2.0)) - np.diag(np.ones(n - 2), 1) - np.diag(np.ones(n - 2), -1)) / d
    Q += d * np.eye(n - 1)
    z = path.values[..., 1:-1]
    u = path.u_o if path.u_o.ndim == 0 else path.u_o[..., None]
    b = np.zeros(z.shape, dtype=complex)
    b[..., 0] += u / d
    b[..., -1] += u / d
    quad = np.real(np.einsum("...i,ij,...j->...", np.conj(z), Q, z))
    return -0.5 * quad + np.real(np.sum(np.conj(b) * z, axis=-1))


def rho_bridge_identity_residual(path: BridgePath) -> float:
    """Spread over the batch of log p_rho - (bridge log-density + rho weight); zero when exact."""
    diff = rho_conditional_log_density(path) - (bridge_log_density(path) + rho_bridge_weight(path))
    return float(np.max(diff) - np.min(diff))
