"""Periodic complex fields on [0, 2pi) in mode and grid space.

Coefficients are stored for modes n = -N..N at index n + N, so that
``u(x) = sum_n c_n exp(i n x)``.  Arrays may carry leading batch axes;
the mode (or grid) axis is always the last one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SizeError(ValueError):
    """Grid or mode counts incompatible with the requested operation."""


def padded_size(N: int) -> int:
    """Smallest power of two >= 3(2N+1); alias-free for quintic products."""
    target = 3 * (2 * N + 1)
    return 1 << (target - 1).bit_length()


def modes(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


@dataclass(frozen=True)
class SpectralField:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 0 or c.shape[-1] % 2 != 1:
            raise SizeError(f"need an odd number of coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return (self.coeffs.shape[-1] - 1) // 2

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    def __getitem__(self, idx) -> "SpectralField":
        if self.coeffs.ndim == 1:
            raise IndexError("single field is not indexable")
        return SpectralField(self.coeffs[idx])

    def __len__(self) -> int:
        if self.coeffs.ndim == 1:
            raise TypeError("single field has no length")
        return self.coeffs.shape[0]

    def mode(self, n: int) -> np.ndarray:
        return self.coeffs[..., n + self.N]

    @classmethod
    def zeros(cls, N: int, batch_shape: tuple = ()) -> "SpectralField":
        return cls(np.zeros(batch_shape + (2 * N + 1,), dtype=complex))

    @classmethod
    def from_modes(cls, N: int, values: dict) -> "SpectralField":
        """Field with the given {n: coefficient} entries, zero elsewhere."""
        c = np.zeros(2 * N + 1, dtype=complex)
        for n, v in values.items():
            if abs(n) > N:
                raise SizeError(f"mode {n} outside cutoff {N}")
            c[n + N] = v
        return cls(c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + _coerce(other, self.N))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - _coerce(other, self.N))

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def resize(self, N_new: int) -> "SpectralField":
        """Zero-pad or truncate to cutoff N_new."""
        N = self.N
        out = np.zeros(self.batch_shape + (2 * N_new + 1,), dtype=complex)
        k = min(N, N_new)
        out[..., N_new - k : N_new + k + 1] = self.coeffs[..., N - k : N + k + 1]
        return SpectralField(out)


def _coerce(other, N):
    if not isinstance(other, SpectralField):
        raise TypeError("expected SpectralField")
    if other.N != N:
        raise SizeError(f"cutoff mismatch {other.N} != {N}")
    return other.coeffs


@dataclass(frozen=True)
class GridField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 0 or v.shape[-1] < 1:
            raise SizeError("empty grid")
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[-1]

    @property
    def x(self) -> np.ndarray:
        return grid_points(self.M)


def grid_points(M: int) -> np.ndarray:
    return 2 * np.pi * np.arange(M) / M


def coeffs_to_grid(c: np.ndarray, M: int) -> np.ndarray:
    """Array-level synthesis: values_j = sum_n c_n exp(i n x_j)."""
    N = (c.shape[-1] - 1) // 2
    if M < 2 * N + 1:
        raise SizeError(f"grid size {M} < 2N+1 = {2 * N + 1}")
    buf = np.zeros(c.shape[:-1] + (M,), dtype=complex)
    buf[..., : N + 1] = c[..., N:]
    if N:
        buf[..., M - N :] = c[..., :N]
    return np.fft.ifft(buf, axis=-1) * M


def grid_to_coeffs(v: np.ndarray, N: int) -> np.ndarray:
    """Array-level analysis: discrete Fourier coefficients truncated to |n| <= N."""
    M = v.shape[-1]
    if M < 2 * N + 1:
        raise SizeError(f"grid size {M} < 2N+1 = {2 * N + 1}")
    f = np.fft.fft(v, axis=-1) / M
    out = np.empty(v.shape[:-1] + (2 * N + 1,), dtype=complex)
    out[..., N:] = f[..., : N + 1]
    if N:
        out[..., :N] = f[..., M - N :]
    return out


def to_grid(f: SpectralField, M: int) -> GridField:
    return GridField(coeffs_to_grid(f.coeffs, M))


def to_spectral(g: GridField, N: int) -> SpectralField:
    return SpectralField(grid_to_coeffs(np.asarray(g.values, dtype=complex), N))


def derivative(f: SpectralField) -> SpectralField:
    return SpectralField(1j * modes(f.N) * f.coeffs)


def translate(f: SpectralField, a) -> SpectralField:
    """The field x -> f(x + a); ``a`` may broadcast over the batch axes."""
    a = np.asarray(a, dtype=float)[..., None]
    return SpectralField(f.coeffs * np.exp(1j * modes(f.N) * a))


def quadrature(g: GridField):
    """Trapezoidal integral over the period; exact for trig degree < M."""
    return 2 * np.pi * np.mean(g.values, axis=-1)


def l2_norm_sq(f: SpectralField):
    return 2 * np.pi * np.sum(np.abs(f.coeffs) ** 2, axis=-1)


def dealiased_product(fs) -> GridField:
    """Pointwise product of grid fields sampled at a common padded size."""
    fs = list(fs)
    if not fs:
        raise ValueError("need at least one factor")
    M = fs[0].M
    out = np.asarray(fs[0].values)
    for g in fs[1:]:
        if g.M != M:
            raise SizeError(f"resolution mismatch {g.M} != {M}")
        out = out * g.values
    return GridField(out)
