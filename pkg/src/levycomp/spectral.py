"""Fourier-multiplier transition operators, densities and Sobolev norms in 1-D.

Grids are periodic with ``N`` (a power of two) points ``x_j = c + (j - N/2) dx``
and angular frequencies ``ω = 2π fftfreq(N, dx)``. A transition operator of a
PII acts by ``T_{s,t}f(x) = E f(x + L_t - L_s)``, i.e. multiplication of each
Fourier mode ``exp(iωx)`` by the increment's characteristic function at ``ω``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .generator import char_function_pii, cumulant
from .specs import TripletSchedule

BOUNDARY_MASS_TOL = 1e-10
FREQ_TAIL_TOL = 1e-12
DEFAULT_N = 4096


class BoundaryMassWarning(UserWarning):
    """Grid function carries mass near the periodic boundary."""


class FrequencyTailWarning(UserWarning):
    """Characteristic function has not decayed at the Nyquist frequency."""


@dataclass(frozen=True)
class GridFunction:
    center: float
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        if n < 2 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two, got {n}")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def x(self) -> np.ndarray:
        return self.center + (np.arange(self.n) - self.n // 2) * self.spacing

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, self.spacing)

    @property
    def half_width(self) -> float:
        return 0.5 * self.n * self.spacing

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.center, self.spacing, np.asarray(values))

    def at(self, x) -> np.ndarray:
        """Linear interpolation; exact at grid points."""
        v = self.values
        xs = self.x
        if np.iscomplexobj(v):
            return np.interp(x, xs, v.real) + 1j * np.interp(x, xs, v.imag)
        return np.interp(x, xs, v)

    def interior(self, fraction: float = 0.5) -> np.ndarray:
        """Mask of points with ``|x - c| <= fraction * half_width``."""
        return np.abs(self.x - self.center) <= fraction * self.half_width + 1e-12

    def boundary_mass(self) -> float:
        """``Σ |f| dx`` over the outer 1/32 of the box on each side."""
        k = max(1, self.n // 32)
        v = np.abs(self.values)
        return float((v[:k].sum() + v[-k:].sum()) * self.spacing)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "value"])
            for x, v in zip(self.x, self.values):
                w.writerow([repr(float(x)), repr(float(np.real(v)))])


def sample_on_grid(f, center: float, spacing: float, n: int = DEFAULT_N) -> GridFunction:
    """Grid function from a callable (a ``TestFunction`` or any vectorized map)."""
    x = center + (np.arange(n) - n // 2) * spacing
    return GridFunction(center, spacing, np.asarray(f(x)))


def effective_scale(schedule: TripletSchedule, s: float, t: float, n_quad: int = 16):
    """``(mean, sd)`` of ``L_t - L_s`` from the identity-cut-off drift and second moments."""
    if t <= s:
        return 0.0, 0.0
    u, w = np.polynomial.legendre.leggauss(n_quad)
    mean = var = 0.0
    for ui, wi in zip(0.5 * (t - s) * u + 0.5 * (t + s), 0.5 * (t - s) * w):
        tr = schedule.triplet(float(ui))
        locs, ws = tr.F.discretize()
        jump_var = float(np.sum(ws * locs[:, 0] ** 2)) if len(ws) else 0.0
        var += wi * (float(tr.sigma[0, 0]) + jump_var)
        mean += wi * float(schedule.identity_drift(float(ui))[0])
    return mean, math.sqrt(max(var, 0.0))


def spectral_grid(schedule: Optional[TripletSchedule] = None, s: float = 0.0, t: float = 1.0,
                  n: int = DEFAULT_N, half_width: Optional[float] = None, center: float = 0.0):
    """``(center, spacing, n)`` for a box of half-width ``20 σ_eff + |mean|``.

    The half-width is rounded up to a power of two (at least 8) so the spacing
    is dyadic and integers and halves fall exactly on grid points.
    """
    if half_width is None:
        mean, sd = (0.0, 0.0) if schedule is None else effective_scale(schedule, s, t)
        need = max(8.0, 20.0 * sd + abs(mean))
        half_width = 2.0 ** math.ceil(math.log2(need))
    return center, 2.0 * half_width / n, n


def transition_multiplier(schedule: TripletSchedule, s: float, t: float, omega) -> np.ndarray:
    """Multiplier of ``T_{s,t}`` on the mode ``exp(iωx)``."""
    return char_function_pii(schedule, s, t, np.asarray(omega)[:, None])


def _apply_multiplier(f: GridFunction, mult: np.ndarray) -> GridFunction:
    v = f.values
    if np.iscomplexobj(v):
        return f.with_values(np.fft.ifft(np.fft.fft(v) * mult))
    half = mult[: f.n // 2 + 1].copy()
    half[-1] = np.conj(mult[f.n // 2])  # rfft bins use +ω; the Nyquist bin of fftfreq is -ω
    return f.with_values(np.fft.irfft(np.fft.rfft(v) * half, n=f.n))


def fourier_multiplier_transition(schedule: TripletSchedule, s: float, t: float, f: GridFunction,
                                  check_boundary: bool = True) -> GridFunction:
    """``T_{s,t}f`` on the same grid; ``s == t`` returns ``f`` unchanged."""
    if t < s:
        raise ValueError("need s <= t")
    if check_boundary and f.boundary_mass() > BOUNDARY_MASS_TOL:
        warnings.warn(f"boundary mass {f.boundary_mass():.3g} exceeds {BOUNDARY_MASS_TOL:g}; "
                      "periodization may affect values near the box edges",
                      BoundaryMassWarning, stacklevel=2)
    if t == s:
        return f
    return _apply_multiplier(f, transition_multiplier(schedule, s, t, f.omega))


def apply_generator_grid(schedule: TripletSchedule, s: float, f: GridFunction) -> GridFunction:
    """``A_s f`` spectrally: each mode is multiplied by the cumulant ``θ_s(iω)``."""
    return _apply_multiplier(f, cumulant(schedule, s, f.omega[:, None]))


def density_pii(schedule: TripletSchedule, s: float, t: float, grid) -> GridFunction:
    """Density of ``L_t - L_s`` by discrete Fourier inversion of its characteristic function.

    ``grid`` is a ``(center, spacing, n)`` tuple or a ``GridFunction`` whose grid is reused.
    """
    if isinstance(grid, GridFunction):
        c, dx, n = grid.center, grid.spacing, grid.n
    else:
        c, dx, n = grid
    omega = 2 * np.pi * np.fft.fftfreq(n, dx)
    phi = transition_multiplier(schedule, s, t, omega)
    tail = float(np.abs(phi[n // 2]))
    if not tail < FREQ_TAIL_TOL:
        warnings.warn(f"|characteristic function| = {tail:.3g} at the Nyquist frequency; "
                      "the law is not resolved by this grid", FrequencyTailWarning, stacklevel=2)
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    p = np.fft.fft(phi * np.exp(-1j * omega * c) * sign).real / (n * dx)
    return GridFunction(c, dx, p)


def sobolev_norm(f: GridFunction, r: float) -> float:
    """Discrete ``(∫ |û(ξ)|² (1 + |ξ|)^{2r} dξ)^{1/2}`` with the unitary transform."""
    spec = np.abs(np.fft.fft(f.values)) ** 2
    weight = (1.0 + np.abs(f.omega)) ** (2 * r)
    return math.sqrt(f.spacing / f.n * math.fsum(spec * weight))


def l2_norm(f: GridFunction) -> float:
    return math.sqrt(f.spacing * math.fsum(np.abs(f.values) ** 2))
