"""The phase gauge G(f) = exp(-i J(f)) f and its cutoff variant.

J(f) is the zero-mean antiderivative of h = |f|^2 - m(f).  Averaging the
double integral over the base point theta fixes the additive constant to
exactly that choice, so no separate normalisation is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    GridField,
    SpectralField,
    coeffs_to_grid,
    grid_to_coeffs,
    modes,
    padded_size,
)


@dataclass(frozen=True)
class GaugeSpec:
    B: float = np.inf
    mode: str = "plain"

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("mass cutoff B must be positive")
        if self.mode not in ("plain", "cutoff"):
            raise ValueError(f"unknown gauge mode {self.mode!r}")

    @property
    def mass_threshold(self) -> float:
        """Fields with m(f) above this are left untouched in cutoff mode."""
        return self.B**2 / (2 * np.pi)

    def active(self, m):
        m = np.asarray(m)
        if self.mode == "plain":
            return np.ones(m.shape, dtype=bool)
        return m <= self.mass_threshold


def _pow2_at_least(k: int) -> int:
    return 1 << (max(k, 1) - 1).bit_length()


def _phase_coeffs(f: SpectralField, spec: GaugeSpec) -> np.ndarray:
    """Fourier coefficients (|n| <= 2N) of J(f), zeroed where the cutoff bites."""
    N = f.N
    v = coeffs_to_grid(f.coeffs, padded_size(N))
    dens = grid_to_coeffs(np.abs(v) ** 2, 2 * N)
    m = dens[..., 2 * N].real
    n = modes(2 * N)
    safe = np.where(n == 0, 1, n)
    jc = np.where(n == 0, 0, dens / (1j * safe))
    jc = np.where(spec.active(m)[..., None], jc, 0)
    return jc


def J(f: SpectralField, spec: GaugeSpec = GaugeSpec(), M: int | None = None) -> GridField:
    """Phase functional on an M-point grid (default: the padded grid)."""
    M = M or padded_size(f.N)
    return GridField(_sample(_phase_coeffs(f, spec), M).real)


def h(f: SpectralField, spec: GaugeSpec = GaugeSpec(), M: int | None = None) -> GridField:
    """dJ/dx = |f|^2 - m(f), or 0 beyond the cutoff."""
    M = M or padded_size(f.N)
    v = coeffs_to_grid(f.coeffs, M)
    dens = np.abs(v) ** 2
    m = np.sum(np.abs(f.coeffs) ** 2, axis=-1)
    out = dens - m[..., None]
    out = np.where(spec.active(m)[..., None], out, 0.0)
    return GridField(out)


def _sample(c: np.ndarray, M: int) -> np.ndarray:
    """Evaluate a trig polynomial on M points, oversampling when M is too small."""
    K = (c.shape[-1] - 1) // 2
    if M >= 2 * K + 1:
        return coeffs_to_grid(c, M)
    r = -(-(2 * K + 1) // M)
    return coeffs_to_grid(c, r * M)[..., ::r]


def work_grid(N: int, n_out: int) -> int:
    """Grid used to apply the phase: alias-free for J (degree 2N) and roomy for the output."""
    return max(padded_size(N), _pow2_at_least(3 * (2 * n_out + 1)))


def _apply(f: SpectralField, spec: GaugeSpec, sign: int, n_out: int | None) -> SpectralField:
    N = f.N
    n_out = N if n_out is None else n_out
    M = work_grid(N, n_out)
    phase = coeffs_to_grid(_phase_coeffs(f, spec), M).real
    vals = coeffs_to_grid(f.coeffs, M) * np.exp(sign * 1j * phase)
    return SpectralField(grid_to_coeffs(vals, n_out))


def gauge(f: SpectralField, spec: GaugeSpec = GaugeSpec(), n_out: int | None = None) -> SpectralField:
    """G(f) = exp(-iJ(f)) f, truncated to cutoff n_out (default: the input cutoff)."""
    return _apply(f, spec, -1, n_out)


def gauge_inverse(f: SpectralField, spec: GaugeSpec = GaugeSpec(), n_out: int | None = None) -> SpectralField:
    """G^{-1}(f) = exp(+iJ(f)) f.  J only sees |f|, so the same phase serves both ways."""
    return _apply(f, spec, +1, n_out)


def gauge_grid(f: SpectralField, spec: GaugeSpec, M: int, sign: int = -1) -> np.ndarray:
    """Untruncated exp(sign*iJ) f sampled on an M-point grid (M >= 4N+1)."""
    if M < 4 * f.N + 1:
        raise ValueError("grid too coarse to carry J exactly")
    phase = coeffs_to_grid(_phase_coeffs(f, spec), M).real
    return coeffs_to_grid(f.coeffs, M) * np.exp(sign * 1j * phase)


def truncation_residual(f: SpectralField, spec: GaugeSpec = GaugeSpec(), n_out: int | None = None):
    """Fraction of the L^2 mass of G(f) lying beyond cutoff n_out."""
    g = gauge(f, spec, n_out)
    m = np.sum(np.abs(f.coeffs) ** 2, axis=-1)
    kept = np.sum(np.abs(g.coeffs) ** 2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(m > 0, np.abs(1 - kept / np.where(m > 0, m, 1)), 0.0)
