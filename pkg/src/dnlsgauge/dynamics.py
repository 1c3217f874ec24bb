"""Pseudospectral integration of DNLS and its gauged forms.

Equations (all periodic on [0, 2pi]):

    dnls        u_t = i u_xx + (|u|^2 u)_x
    gdnls_plus  w_t = i w_xx + 2m w_x - w^2 conj(w_x) + (i/2)|w|^4 w - i psi w - i m |w|^2 w
    gdnls_v     the same without 2m w_x

Time stepping is Lawson's integrating-factor RK4: the dispersive symbol (and,
for gdnls_plus, the transport 2m d/dx with m frozen at the step start) is
applied exactly; everything else, including the drift of m inside the step,
is treated by RK4.  Nonlinear products are dealiased on the padded grid.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from . import functionals
from .gauge import GaugeSpec, gauge
from .spectral import SpectralField, coeffs_to_grid, grid_to_coeffs, modes, padded_size, translate

EQUATIONS = ("dnls", "gdnls_plus", "gdnls_v")
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class SolverConfig:
    N: int
    dt: float = 1e-4
    T: float = 1.0
    equation: str = "dnls"
    scheme: str = "IFRK4"
    stability_c: float = 4.0
    record_every: int | None = None
    pad: int | None = None

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.scheme != "IFRK4":
            raise ValueError("only IFRK4 is implemented")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= 0:
            raise ValueError("T must be non-negative")
        if self.dt > self.stability_c / self.N**2:
            raise ValueError(f"dt = {self.dt} violates the guard dt <= {self.stability_c}/N^2")
        if self.pad is not None and self.pad < (4 if self.equation == "dnls" else 6) * self.N + 1:
            raise ValueError("pad too small to dealias the nonlinearity")

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError("T must be an integer multiple of dt")
        return n

    @property
    def grid(self) -> int:
        return self.pad or alias_free_grid(self.N, self.equation)


def alias_free_grid(N: int, equation: str) -> int:
    """Smallest FFT-friendly grid on which the nonlinearity projects back without aliasing.

    Cubic terms need M >= 4N + 1, quintic ones M >= 6N + 1.
    """
    return sfft.next_fast_len((4 if equation == "dnls" else 6) * N + 1)


def _to_grid(c: np.ndarray, M: int) -> np.ndarray:
    N = (c.shape[-1] - 1) // 2
    buf = np.zeros(c.shape[:-1] + (M,), dtype=complex)
    buf[..., : N + 1] = c[..., N:]
    buf[..., M - N:] = c[..., :N]
    return sfft.ifft(buf, axis=-1, norm="forward", overwrite_x=True)


def _project(v: np.ndarray, N: int) -> np.ndarray:
    f = sfft.fft(v, axis=-1, norm="forward", overwrite_x=True)
    return np.concatenate([f[..., f.shape[-1] - N:], f[..., : N + 1]], axis=-1)


def _nonlinear(c: np.ndarray, equation: str, M: int) -> np.ndarray:
    """Everything in the right-hand side except i u_xx."""
    N = (c.shape[-1] - 1) // 2
    n = modes(N)
    u = _to_grid(c, M)
    rho = u.real**2 + u.imag**2
    if equation == "dnls":
        return 1j * n * _project(rho * u, N)
    ux = _to_grid(1j * n * c, M)
    m = np.sum(c.real**2 + c.imag**2, axis=-1, keepdims=True)
    cux = np.conj(ux)
    im_uux = TWO_PI * np.mean((u * cux).imag, axis=-1, keepdims=True)
    int4 = TWO_PI * np.mean(rho * rho, axis=-1, keepdims=True)
    psi = -im_uux / np.pi + int4 / (2 * TWO_PI) - m**2
    g = u * (rho * (0.5j * rho - 1j * m) - u * cux)
    out = _project(g, N) - 1j * psi * c
    if equation == "gdnls_plus":
        out += 2j * m * n * c
    return out


def rhs(u: SpectralField, equation: str = "dnls", M: int | None = None) -> SpectralField:
    if equation not in EQUATIONS:
        raise ValueError(f"unknown equation {equation!r}")
    M = M or alias_free_grid(u.N, equation)
    n = modes(u.N)
    return SpectralField(-1j * n**2 * u.coeffs + _nonlinear(u.coeffs, equation, M))


def monitors(u: SpectralField, equation: str) -> dict:
    """Quantities conserved by the continuum flow of ``equation``."""
    if equation == "dnls":
        return {"mass": functionals.mass(u), "hamiltonian": functionals.hamiltonian(u),
                "energy": functionals.energy(u)}
    return {"mass": functionals.mass(u), "hamiltonian": functionals.gauged_hamiltonian(u),
            "energy": functionals.gauged_energy(u), "script_energy": functionals.script_energy(u)}


def top_band_fraction(u: SpectralField, band: float = 0.1) -> np.ndarray:
    """Share of the L^2 mass carried by the top ``band`` of modes (|n| > (1 - band) N)."""
    n = np.abs(modes(u.N))
    a = np.abs(u.coeffs) ** 2
    total = a.sum(axis=-1)
    top = a[..., n > (1 - band) * u.N].sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, top / np.where(total > 0, total, 1), 0.0)


@dataclass
class TrajectoryReport:
    times: np.ndarray
    drift: dict
    top_band_initial: np.ndarray
    top_band_final: np.ndarray
    diverged: np.ndarray
    last_valid_time: np.ndarray
    history: dict = field(default_factory=dict)

    def under_resolved(self, floor: float = 1e-6, growth: float = 10.0) -> np.ndarray:
        """Top-band mass above the floor and grown by more than ``growth`` over the run."""
        return (self.top_band_final > floor) & (self.top_band_final > growth * self.top_band_initial)

    def max_drift(self, name: str) -> float:
        d = self.drift[name][~self.diverged]
        return float(d.max()) if d.size else float("nan")

    def as_dict(self) -> dict:
        out = {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in asdict(self).items()
               if k not in ("drift", "history")}
        out["drift"] = {k: v.tolist() for k, v in self.drift.items()}
        return out


def evolve(u0: SpectralField, config: SolverConfig, keep_history: bool = False):
    """Integrate ``u0`` (a single field or a batch) to time config.T.

    Rows that blow up are frozen at their last finite state and flagged in
    the report together with the time at which they were last valid.
    """
    if u0.N != config.N:
        raise ValueError(f"field has N = {u0.N}, solver expects {config.N}")
    eq, dt, M = config.equation, config.dt, config.grid
    steps = config.n_steps
    every = config.record_every or max(1, steps // 20)
    n = modes(config.N)
    c = np.array(u0.coeffs, dtype=complex)
    single = c.ndim == 1
    c = np.atleast_2d(c).copy()
    batch = c.shape[0]
    dispersion = -1j * n**2

    def record(state):
        with np.errstate(over="ignore", invalid="ignore"):
            return {k: np.atleast_1d(v) for k, v in monitors(SpectralField(state.copy()), eq).items()}

    ref = record(c)
    drift = {k: np.zeros(batch) for k in ref}
    history = {k: [v.copy()] for k, v in ref.items()}
    times = [0.0]
    diverged = np.zeros(batch, dtype=bool)
    last_valid = np.full(batch, config.T)
    top0 = top_band_fraction(SpectralField(c.copy()))

    for step in range(steps):
        if eq == "gdnls_plus":
            m0 = np.sum(np.abs(c) ** 2, axis=-1, keepdims=True)
            L = dispersion + 2j * m0 * n
        else:
            m0 = 0.0
            L = np.broadcast_to(dispersion, c.shape)
        E2 = np.exp(0.5 * dt * L)
        E = E2 * E2

        def nl(v):
            out = _nonlinear(v, eq, M)
            if eq == "gdnls_plus":
                out = out - 2j * m0 * n * v
            return out

        with np.errstate(over="ignore", invalid="ignore"):
            k1 = nl(c)
            k2 = nl(E2 * (c + 0.5 * dt * k1))
            k3 = nl(E2 * c + 0.5 * dt * k2)
            k4 = nl(E * c + dt * E2 * k3)
            new = E * c + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)
        bad = ~np.all(np.isfinite(new), axis=-1) & ~diverged
        if np.any(bad):
            last_valid[bad] = step * dt
            diverged |= bad
        new[diverged] = c[diverged]
        c = new
        if (step + 1) % every == 0 or step + 1 == steps:
            now = record(c)
            for k in drift:
                drift[k] = np.maximum(drift[k], np.where(diverged, np.nan, np.abs(now[k] - ref[k])))
                if keep_history:
                    history[k].append(now[k])
            times.append((step + 1) * dt)

    if np.any(diverged):
        warnings.warn(f"{int(diverged.sum())} trajectories diverged", RuntimeWarning)
    report = TrajectoryReport(np.array(times), drift, top0, top_band_fraction(SpectralField(c.copy())),
                              diverged, last_valid,
                              {k: np.array(v) for k, v in history.items()} if keep_history else {})
    return SpectralField(c[0] if single else c), report


def _sup_distance(a: SpectralField, b: SpectralField) -> np.ndarray:
    M = padded_size(max(a.N, b.N))
    return np.max(np.abs(coeffs_to_grid(a.coeffs, M) - coeffs_to_grid(b.coeffs, M)), axis=-1)


def plane_wave(N: int, A: complex, k: int = 1, t: float = 0.0) -> SpectralField:
    """Exact solution A exp(i(kx - omega t)), omega = k^2 - k|A|^2, of dnls and gdnls_plus."""
    omega = k**2 - k * abs(A) ** 2
    return SpectralField.from_modes(N, {k: A * np.exp(-1j * omega * t)})


def gauge_equivariance_check(u0: SpectralField, config: SolverConfig, spec: GaugeSpec = GaugeSpec()):
    """sup |G(u(T)) - w(T)| where u solves dnls from u0 and w solves gdnls_plus from G(u0)."""
    if config.T == 0:
        return np.zeros(np.shape(u0.coeffs)[:-1])
    uT, ru = evolve(u0, _with(config, "dnls"))
    wT, rw = evolve(gauge(u0, spec), _with(config, "gdnls_plus"))
    d = _sup_distance(gauge(uT, spec), wT)
    return np.where(ru.diverged | rw.diverged, np.nan, d) if np.ndim(d) else (np.nan if ru.diverged[0] or rw.diverged[0] else float(d))


def galilean_link_check(w0: SpectralField, config: SolverConfig):
    """sup |w(T) - v(. + 2 T m(w0), T)| for the gdnls_plus and gdnls_v flows from w0."""
    if config.T == 0:
        return np.zeros(np.shape(w0.coeffs)[:-1])
    wT, rw = evolve(w0, _with(config, "gdnls_plus"))
    vT, rv = evolve(w0, _with(config, "gdnls_v"))
    shift = 2 * config.T * functionals.mass(w0)
    d = _sup_distance(wT, translate(vT, shift))
    return np.where(rw.diverged | rv.diverged, np.nan, d) if np.ndim(d) else (np.nan if rw.diverged[0] or rv.diverged[0] else float(d))


def _with(config: SolverConfig, equation: str) -> SolverConfig:
    from dataclasses import replace

    return replace(config, equation=equation)


# invariance experiments -----------------------------------------------------

CASES = {"nu+dnls": ("nu", "dnls"), "mu+gdnls_plus": ("mu", "gdnls_plus"), "mu+gdnls_v": ("mu", "gdnls_v")}

# quantities that the truncated flow itself conserves; the remaining monitors
# are conserved only by the continuum equation and are reported, not gated
GATED = {"dnls": ("mass", "hamiltonian"), "gdnls_plus": ("mass",), "gdnls_v": ("mass",)}


def invariance_panel(equation: str) -> dict:
    from . import measures

    ham = functionals.hamiltonian if equation == "dnls" else functionals.gauged_hamiltonian
    return {"mass": measures.obs_mass, "quartic": measures.obs_quartic, "hamiltonian": ham,
            "re_mode0": measures.obs_re_mode0, "cos_re_u0": measures.obs_cos_point}


@dataclass
class InvarianceReport:
    case: str
    count: int
    T: float
    rows: list
    drift: dict
    gated: tuple
    drift_tol: float
    diverged: int
    under_resolved: int
    params: dict = field(default_factory=dict)

    @property
    def divergence_rate(self) -> float:
        return self.diverged / self.count if self.count else 0.0

    @property
    def valid(self) -> bool:
        return self.divergence_rate <= 0.01

    @property
    def max_gap(self) -> float:
        return max(r["sigma_gap"] for r in self.rows)

    @property
    def drift_ok(self) -> bool:
        return all(self.drift[k] <= self.drift_tol for k in self.gated)

    @property
    def passed(self) -> bool:
        return self.valid and self.drift_ok and self.max_gap <= 3.0

    def as_dict(self) -> dict:
        return {"case": self.case, "count": self.count, "T": self.T, "rows": self.rows,
                "drift": self.drift, "gated": list(self.gated), "drift_tol": self.drift_tol,
                "diverged": self.diverged, "under_resolved": self.under_resolved,
                "valid": self.valid, "passed": self.passed, "params": self.params}


def invariance_experiment(case: str, count: int, solver: SolverConfig, measure, seed: int,
                          chains: int = 50, step_scale: float = 0.3, burn_in: int = 1000, thin: int = 10,
                          drift_tol: float = 1e-7, chunk: int = 1000) -> InvarianceReport:
    """Panel means at t = 0 and t = T over a Metropolis ensemble of ``measure``.

    ``measure`` is a MeasureConfig; its ``which`` is overridden by the case.
    Diverged and under-resolved trajectories are excluded from the panel
    statistics and counted.
    """
    from dataclasses import replace

    from . import measures

    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    which, equation = CASES[case]
    solver = replace(solver, equation=equation)
    if measure.N != solver.N:
        raise ValueError("measure and solver disagree on N")
    chain = measures.mcmc_sample_nu(replace(measure, which=which), seed, count, step_scale, burn_in, thin, chains)
    u0 = chain.ensemble.samples
    finals, reports = [], []
    for s in range(0, count, chunk):
        uT, rep = evolve(u0[s:s + chunk], solver)
        finals.append(uT.coeffs)
        reports.append(rep)
    uT = SpectralField(np.concatenate(finals))
    diverged = np.concatenate([r.diverged for r in reports])
    flagged = np.concatenate([r.under_resolved() for r in reports])
    keep = ~(diverged | flagged)
    drift = {k: float(np.max(np.concatenate([r.drift[k] for r in reports])[~diverged], initial=0.0))
             for k in reports[0].drift}
    rows = []
    for name, F in invariance_panel(equation).items():
        a = measures.chain_mean(F(u0), chains, mask=keep)
        b = measures.chain_mean(F(uT), chains, mask=keep)
        rows.append({"name": name, "mean0": a.value, "stderr0": a.stderr, "meanT": b.value,
                     "stderrT": b.stderr, "sigma_gap": measures.combined_gap(a, b)})
    params = {"N": solver.N, "dt": solver.dt, "seed": seed, "B": measure.as_dict()["B"],
              "normalization": measure.normalization, "acceptance": chain.acceptance, "chains": chains}
    return InvarianceReport(case, count, solver.T, rows, drift, GATED[equation], drift_tol,
                            int(diverged.sum()), int(flagged.sum()), params)
