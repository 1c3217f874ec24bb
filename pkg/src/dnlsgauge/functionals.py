"""Conserved quantities of DNLS and their gauged counterparts.

Every nonlinear integrand is formed on the padded grid and integrated by the
trapezoidal rule, which is exact for the trigonometric polynomials involved.
All functions accept batched fields and return arrays over the batch axes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import gauge as _gauge
from .spectral import SpectralField, coeffs_to_grid, modes, padded_size

TWO_PI = 2 * np.pi


class _Terms:
    """Grid integrals shared by all functionals of one field (or batch)."""

    def __init__(self, f: SpectralField):
        M = padded_size(f.N)
        u = coeffs_to_grid(f.coeffs, M)
        ux = coeffs_to_grid(1j * modes(f.N) * f.coeffs, M)
        rho = np.abs(u) ** 2
        w = TWO_PI / M
        self.m = np.sum(np.abs(f.coeffs) ** 2, axis=-1)
        self.grad_sq = w * np.sum(np.abs(ux) ** 2, axis=-1)
        # Im int u conj(u_x)
        self.im_uux = w * np.sum(np.imag(u * np.conj(ux)), axis=-1)
        # Im int u^2 conj(u) conj(u_x) = Im int |u|^2 u conj(u_x)
        self.im_quartic = w * np.sum(np.imag(rho * u * np.conj(ux)), axis=-1)
        self.int4 = w * np.sum(rho**2, axis=-1)
        self.int6 = w * np.sum(rho**3, axis=-1)


def mass(u: SpectralField):
    return np.sum(np.abs(u.coeffs) ** 2, axis=-1)


def energy(u: SpectralField):
    t = _Terms(u)
    return t.grad_sq + 1.5 * t.im_quartic + 0.5 * t.int6


def hamiltonian(u: SpectralField):
    t = _Terms(u)
    return t.im_uux + 0.5 * t.int4


def nonquad_N(u: SpectralField):
    """Non-quadratic part of the energy."""
    t = _Terms(u)
    return 1.5 * t.im_quartic + 0.5 * t.int6


def _gauged_nonquad(t: _Terms):
    m = t.m
    return -0.5 * t.im_quartic + 2 * m * t.im_uux - 0.5 * m * t.int4 + TWO_PI * m**3


def gauged_hamiltonian(w: SpectralField):
    t = _Terms(w)
    return t.im_uux - 0.5 * t.int4 + TWO_PI * t.m**2


def gauged_energy(w: SpectralField):
    t = _Terms(w)
    return t.grad_sq + _gauged_nonquad(t)


def gauged_nonquad(w: SpectralField):
    """Exponent of the gauged Gibbs density relative to the Gaussian."""
    return _gauged_nonquad(_Terms(w))


def script_energy(w: SpectralField):
    t = _Terms(w)
    return t.grad_sq - 0.5 * t.im_quartic + (TWO_PI * t.m) * t.int4 / (2 * TWO_PI)


def psi(w: SpectralField):
    t = _Terms(w)
    return -t.im_uux / np.pi + t.int4 / (2 * TWO_PI) - t.m**2


def density_exponent_pullback(w: SpectralField):
    """N(G^{-1}(w)) in closed form, without applying the inverse gauge."""
    t = _Terms(w)
    return 1.5 * t.im_quartic - t.int6 + 1.5 * t.m * t.int4


def girsanov_exponent(w: SpectralField):
    """Im int (|w|^2 - m) w conj(w_x) - 1/2 int (|w|^2 - m)^2 |w|^2 (uncut)."""
    t = _Terms(w)
    m = t.m
    return (t.im_quartic - m * t.im_uux) - 0.5 * (t.int6 - 2 * m * t.int4 + m**2 * TWO_PI * m)


def density_chain_residual(w: SpectralField):
    """-N(G^{-1}w)/2 + girsanov_exponent(w) + gauged_nonquad(w)/2, which vanishes identically."""
    return -0.5 * density_exponent_pullback(w) + girsanov_exponent(w) + 0.5 * gauged_nonquad(w)


def fine_grid(N: int, factor: int = 32) -> int:
    return 1 << (factor * (2 * N + 1) - 1).bit_length()


def pointwise_identity_oo3(w: SpectralField, spec: _gauge.GaugeSpec = _gauge.GaugeSpec(), M: int | None = None):
    """Relative grid residuals of the pointwise gauge identities for u = G^{-1}(w).

    u is built on a fine grid and differentiated spectrally there, so the
    check does not presuppose dJ/dx = |w|^2 - m.  The identities are

        u^2 conj(u) conj(u_x) = w^2 conj(w) conj(w_x) - i h |w|^4,   h = |w|^2 - m
        |u_x|^2 = |w_x|^2 - 2 h Im(w conj(w_x)) + h^2 |w|^2

    Returns (cubic, gradient) maxima of |lhs - rhs| over the grid, each
    divided by the grid maximum of the summed term magnitudes.
    """
    M = M or fine_grid(w.N)
    u = _gauge.gauge_grid(w, spec, M, sign=+1)
    k = np.fft.fftfreq(M, 1.0 / M)
    ux = np.fft.ifft(1j * k * np.fft.fft(u, axis=-1), axis=-1)
    wg = coeffs_to_grid(w.coeffs, M)
    wx = coeffs_to_grid(1j * modes(w.N) * w.coeffs, M)
    m = mass(w)[..., None]
    rho = np.abs(wg) ** 2
    h = np.where(spec.active(m), rho - m, 0.0)
    q = wg**2 * np.conj(wg) * np.conj(wx)
    lhs3 = u**2 * np.conj(u) * np.conj(ux)
    rhs3 = q - 1j * h * rho**2
    s3 = np.abs(q) + np.abs(h) * rho**2
    im_l = np.imag(wg * np.conj(wx))
    lhs2 = np.abs(ux) ** 2
    rhs2 = np.abs(wx) ** 2 - 2 * h * im_l + h**2 * rho
    s2 = np.abs(wx) ** 2 + 2 * np.abs(h * im_l) + h**2 * rho

    def rel(d, s):
        return np.max(np.abs(d), axis=-1) / np.maximum(np.max(s, axis=-1), np.finfo(float).tiny)

    return rel(lhs3 - rhs3, s3), rel(lhs2 - rhs2, s2)


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    hamiltonian: float
    energy: float
    nonquad: float
    gauged_hamiltonian: float
    gauged_energy: float
    script_energy: float
    gauged_nonquad: float
    psi: float

    def as_dict(self) -> dict:
        return asdict(self)


def report(u: SpectralField) -> FunctionalReport:
    """All functionals of a single field, each evaluated on that field as given."""
    t = _Terms(u)
    m = float(t.m)
    gnq = float(_gauged_nonquad(t))
    return FunctionalReport(
        mass=m,
        hamiltonian=float(t.im_uux + 0.5 * t.int4),
        energy=float(t.grad_sq + 1.5 * t.im_quartic + 0.5 * t.int6),
        nonquad=float(1.5 * t.im_quartic + 0.5 * t.int6),
        gauged_hamiltonian=float(t.im_uux - 0.5 * t.int4 + TWO_PI * m**2),
        gauged_energy=float(t.grad_sq) + gnq,
        script_energy=float(t.grad_sq - 0.5 * t.im_quartic + m * t.int4 / 2),
        gauged_nonquad=gnq,
        psi=float(-t.im_uux / np.pi + t.int4 / (2 * TWO_PI) - m**2),
    )
