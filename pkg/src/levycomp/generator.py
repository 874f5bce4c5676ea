"""Cumulants, characteristic functions, generators and symbols.

Sign conventions: the cumulant is ``θ_s(iξ) = log E exp(i<ξ, ΔL>)`` per unit
time and the symbol of the process is ``ψ(ξ) = -θ(iξ)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .specs import (DiffusionCoefficient, ProcessSpec, Triplet, TripletSchedule,
                    as_points, cutoff)

FAMILY_TAGS = ("st", "cx", "dcx", "sm", "icx", "idcx", "ism")


@dataclass(frozen=True)
class TestFunction:
    """Scalar test function with analytic first and second derivatives.

    ``value``, ``grad`` and ``hess`` are vectorized over points of shape
    ``(..., d)`` and return ``(...)``, ``(..., d)`` and ``(..., d, d)``.
    """

    __test__ = False  # not a pytest class

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    family_tags: frozenset = frozenset()
    b_bound: Optional[float] = None
    name: str = "f"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return self.value(as_points(x, self.dim))

    def shifted(self) -> "TestFunction":
        """``f - f(0)``; membership tags are unchanged."""
        c = self.value(np.zeros((1, self.dim)))[0]
        bb = None if self.b_bound is None else self.b_bound + abs(c)
        return TestFunction(lambda x: self.value(x) - c, self.grad, self.hess, self.dim,
                            self.family_tags, bb, self.name + "-f(0)", self.params)


def combine(fs, coeffs, name="combination") -> TestFunction:
    """Linear combination ``Σ c_i f_i``."""
    fs, coeffs = list(fs), [float(c) for c in coeffs]
    d = fs[0].dim
    return TestFunction(lambda x: sum(c * f.value(x) for c, f in zip(coeffs, fs)),
                        lambda x: sum(c * f.grad(x) for c, f in zip(coeffs, fs)),
                        lambda x: sum(c * f.hess(x) for c, f in zip(coeffs, fs)),
                        d, frozenset(), None, name)


def constant_function(c: float = 1.0, dim: int = 1) -> TestFunction:
    return TestFunction(lambda x: np.full(x.shape[:-1], float(c)),
                        lambda x: np.zeros(x.shape),
                        lambda x: np.zeros(x.shape + (x.shape[-1],)),
                        dim, frozenset(FAMILY_TAGS), abs(c), f"const({c:g})")


def gaussian_bump(width: float = 1.0, center: float = 0.0) -> TestFunction:
    """One-dimensional ``exp(-((x - c) / w)²)``."""
    def value(x):
        u = (x[..., 0] - center) / width
        return np.exp(-u * u)

    def grad(x):
        u = (x[..., 0] - center) / width
        return (-2 * u / width * np.exp(-u * u))[..., None]

    def hess(x):
        u = (x[..., 0] - center) / width
        return ((4 * u * u - 2) / width**2 * np.exp(-u * u))[..., None, None]

    return TestFunction(value, grad, hess, 1, frozenset(), 1.0, f"bump(w={width:g})")


def exponential_function(xi, dim: int = 1) -> TestFunction:
    """Complex exponential ``exp(i<ξ, x>)``."""
    xi = np.asarray(xi, dtype=float).reshape(dim)

    def value(x):
        return np.exp(1j * (x @ xi))

    return TestFunction(value,
                        lambda x: 1j * value(x)[..., None] * xi,
                        lambda x: -value(x)[..., None, None] * np.outer(xi, xi),
                        dim, frozenset(), 1.0, "exp(i<xi,x>)")


def check_derivatives(f: TestFunction, points, rtol: float = 1e-5, h: float = 1e-4):
    """Compare analytic derivatives with central finite differences.

    Returns ``(grad_ok, hess_ok)``. The tolerance is relative to the largest
    derivative magnitude at each point, floored at one.
    """
    pts = as_points(points, f.dim).reshape(-1, f.dim)
    g_ok = h_ok = True
    eye = np.eye(f.dim)
    for x in pts:
        g = f.grad(x[None])[0]
        H = f.hess(x[None])[0]
        g_fd = np.array([(f.value((x + h * e)[None])[0] - f.value((x - h * e)[None])[0]) / (2 * h)
                         for e in eye])
        H_fd = np.array([(f.grad((x + h * e)[None])[0] - f.grad((x - h * e)[None])[0]) / (2 * h)
                         for e in eye])
        H_fd = 0.5 * (H_fd + H_fd.T)
        scale_g = max(1.0, np.abs(g).max())
        scale_h = max(1.0, np.abs(H).max())
        g_ok &= bool(np.all(np.abs(g - g_fd) <= rtol * scale_g))
        h_ok &= bool(np.all(np.abs(H - H_fd) <= rtol * scale_h))
    return g_ok, h_ok


# ---------------------------------------------------------------------------
# cumulant and characteristic function


def cumulant_triplet(tr: Triplet, xi, mode: str = "truncation") -> np.ndarray:
    """``θ(iξ)`` for a frozen triplet; ``xi`` has shape ``(..., d)``."""
    xi = as_points(xi, tr.dim)
    out = -0.5 * np.einsum("...j,jk,...k->...", xi, tr.sigma, xi) + 1j * (xi @ tr.b)
    locs, w = tr.F.discretize()
    if len(w):
        chi = cutoff(locs, mode)
        phase = xi @ locs.T
        out = out + np.sum(w * (np.exp(1j * phase) - 1.0 - 1j * (xi @ chi.T)), axis=-1)
    return out


def cumulant(schedule: TripletSchedule, s: float, xi) -> np.ndarray:
    """Cumulant ``θ_s(iξ)`` of the schedule at time ``s``."""
    return cumulant_triplet(schedule.triplet(s), xi, schedule.cutoff_mode)


def levy_symbol(tr: Triplet, mode: str = "truncation") -> Callable:
    """Symbol ``ψ(ξ) = -θ(iξ)`` of a homogeneous driver."""
    return lambda xi: -cumulant_triplet(tr, xi, mode)


def integrated_cumulant(schedule: TripletSchedule, s: float, t: float, xi,
                        n_quad: int = 64) -> np.ndarray:
    """``∫_s^t θ_u(iξ) du`` by Gauss-Legendre on ``n_quad`` nodes."""
    xi = as_points(xi, schedule.dim)
    if t < s:
        raise ValueError("need s <= t")
    if t == s:
        return np.zeros(xi.shape[:-1], dtype=complex)
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    us = 0.5 * (t - s) * nodes + 0.5 * (t + s)
    ws = 0.5 * (t - s) * weights
    total = np.zeros(xi.shape[:-1], dtype=complex)
    for u, w in zip(us, ws):
        total = total + w * cumulant(schedule, float(u), xi)
    return total


def char_function_pii(schedule: TripletSchedule, s: float, t: float, xi,
                      n_quad: int = 64) -> np.ndarray:
    """``E exp(i<ξ, L_t - L_s>) = exp(∫_s^t θ_u(iξ) du)``."""
    return np.exp(integrated_cumulant(schedule, s, t, xi, n_quad))


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class LocalCharacteristics:
    """Coefficients of the integro-differential generator at points ``x``.

    ``drift`` is ``(n, d)``, ``cov`` is ``(n, d, d)``; ``jumps`` and
    ``compensator`` are ``(n, m, d)`` displacements with weights ``(m,)``.
    """

    drift: np.ndarray
    cov: np.ndarray
    jumps: np.ndarray
    compensator: np.ndarray
    weights: np.ndarray


def local_characteristics(tr: Triplet, mode: str, x: np.ndarray,
                          phi: Optional[np.ndarray] = None) -> LocalCharacteristics:
    n, d = x.shape
    locs, w = tr.F.discretize()
    chi = cutoff(locs, mode) if len(w) else locs
    if phi is None:
        drift = np.broadcast_to(tr.b, (n, d))
        cov = np.broadcast_to(tr.sigma, (n, d, d))
        jumps = np.broadcast_to(locs, (n,) + locs.shape)
        comp = np.broadcast_to(chi, (n,) + chi.shape)
    else:
        drift = phi @ tr.b
        cov = phi @ tr.sigma @ np.swapaxes(phi, -1, -2)
        jumps = np.einsum("njk,mk->nmj", phi, locs)
        comp = np.einsum("njk,mk->nmj", phi, chi)
    return LocalCharacteristics(drift, cov, jumps, comp, w)


def generator_terms(lc: LocalCharacteristics, f: TestFunction, x: np.ndarray):
    """Diffusion, drift and jump contributions of the generator, each shape ``(n,)``."""
    g = f.grad(x)
    H = f.hess(x)
    diffusion = 0.5 * np.einsum("njk,njk->n", lc.cov, H)
    drift = np.einsum("nj,nj->n", lc.drift, g)
    if len(lc.weights):
        fx = f.value(x)
        fy = f.value(x[:, None, :] + lc.jumps)
        comp = np.einsum("nmj,nj->nm", lc.compensator, g)
        jump = np.sum(lc.weights * (fy - fx[:, None] - comp), axis=-1)
    else:
        jump = np.zeros_like(drift)
    return diffusion, drift, jump


def _spec_terms(spec: ProcessSpec, s: float, f: TestFunction, x):
    pts = as_points(x, spec.dim)
    lead = pts.shape[:-1]
    flat = pts.reshape(-1, spec.dim)
    sched = spec.schedule
    tr = sched.triplet(s)
    phi = None if spec.phi is None else spec.phi(flat, s)
    lc = local_characteristics(tr, sched.cutoff_mode, flat, phi)
    return [t.reshape(lead) for t in generator_terms(lc, f, flat)]


def apply_generator_pii(tr: Triplet, f: TestFunction, x, mode: str = "truncation"):
    """Generator of a PII with frozen triplet ``tr`` applied to ``f`` at ``x``."""
    pts = as_points(x, tr.dim)
    flat = pts.reshape(-1, tr.dim)
    terms = generator_terms(local_characteristics(tr, mode, flat), f, flat)
    return sum(terms).reshape(pts.shape[:-1])


def apply_generator_sde(phi: DiffusionCoefficient, tr: Triplet, s: float, f: TestFunction, x,
                        mode: str = "truncation"):
    """Generator of ``dX = Φ(X_-, s) dL`` at time ``s``.

    Diffusion matrix ``Φ σ Φᵀ``, drift ``Φ b``, jumps displaced by ``Φ y``.
    """
    pts = as_points(x, tr.dim)
    flat = pts.reshape(-1, tr.dim)
    lc = local_characteristics(tr, mode, flat, phi(flat, s))
    return sum(generator_terms(lc, f, flat)).reshape(pts.shape[:-1])


def apply_generator(spec: ProcessSpec, s: float, f: TestFunction, x):
    """Generator of either process variant at time ``s``."""
    return sum(_spec_terms(spec, s, f, x))


def generator_difference(specA: ProcessSpec, specB: ProcessSpec, s: float, f: TestFunction, x):
    """``(B_s - A_s) f(x)``, subtracting diffusion, drift and jump terms separately."""
    if specA.dim != specB.dim:
        raise ValueError("specs differ in dimension")
    ta = _spec_terms(specA, s, f, x)
    tb = _spec_terms(specB, s, f, x)
    return (tb[0] - ta[0]) + (tb[1] - ta[1]) + (tb[2] - ta[2])


def symbol_sde(phi: DiffusionCoefficient, psi: Callable, t: float, x, xi) -> np.ndarray:
    """Symbol ``ψ(Φᵀ(x, t) ξ)`` of the Lévy-driven diffusion at one point ``x``."""
    d = phi.dim
    P = phi(as_points(x, d).reshape(1, d), t)[0]
    xi = as_points(xi, d)
    return psi(xi @ P)
