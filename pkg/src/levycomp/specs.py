"""Process specifications: Lévy measures, triplet schedules, SDE coefficients.

Point arrays follow one convention throughout the package: the trailing axis
holds the ``d`` coordinates. For ``d == 1`` scalars and flat arrays are
accepted wherever points are expected and are promoted by :func:`as_points`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

EPS_PSD = 1e-10
CUTOFF_MODES = ("truncation", "identity")


def as_points(x, dim: int) -> np.ndarray:
    """Return ``x`` as a float array of shape ``(..., dim)``."""
    arr = np.asarray(x)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {arr.shape}")
    return arr


def cutoff(y, mode: str = "truncation") -> np.ndarray:
    """Cut-off function used to compensate small jumps.

    ``truncation`` is ``y * 1{|y| < 1}`` (strict inequality), ``identity`` is ``y``.
    The last axis of ``y`` is the coordinate axis.
    """
    y = np.asarray(y, dtype=float)
    if mode == "identity":
        return y.copy()
    if mode != "truncation":
        raise ValueError(f"unknown cutoff mode {mode!r}")
    norm = np.abs(y) if y.ndim == 0 else np.linalg.norm(y, axis=-1, keepdims=True)
    return np.where(norm < 1.0, y, 0.0)


def _gauss_legendre(a: float, b: float, n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class ContinuousPart:
    """Continuous Lévy density restricted to ``inner <= |y| <= outer``.

    Mass inside the inner ball and outside the box is dropped. In one dimension
    the quadrature is Gauss-Legendre in ``log|y|`` on each half-line, split at
    ``|y| = 1``, which handles power-law singularities at the origin. For ``dim > 1`` a tensor
    Gauss-Legendre rule on ``[-outer, outer]^d`` is used and nodes with
    ``|y| < inner`` are discarded.
    """

    density: Callable[[np.ndarray], np.ndarray]
    inner: float
    outer: float
    n_nodes: int = 200
    dim: int = 1
    label: str = "density"
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer for a continuous Lévy density")
        if self.dim == 1:
            lo, hi = np.log(self.inner), np.log(self.outer)
            if lo < 0.0 < hi:
                # split at |y| = 1 where the cut-off and 1 ∧ |y|² have kinks
                n_lo = max(1, self.n_nodes // 2)
                u1, w1 = _gauss_legendre(lo, 0.0, n_lo)
                u2, w2 = _gauss_legendre(0.0, hi, max(1, self.n_nodes - n_lo))
                u, wu = np.concatenate([u1, u2]), np.concatenate([w1, w2])
            else:
                u, wu = _gauss_legendre(lo, hi, self.n_nodes)
            r = np.exp(u)
            wr = wu * r
            nodes = np.concatenate([-r[::-1], r])[:, None]
            w = np.concatenate([wr[::-1], wr])
        else:
            t, wt = _gauss_legendre(-self.outer, self.outer, self.n_nodes)
            grids = np.meshgrid(*([t] * self.dim), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=-1)
            wgrids = np.meshgrid(*([wt] * self.dim), indexing="ij")
            w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
            keep = np.linalg.norm(nodes, axis=-1) >= self.inner
            nodes, w = nodes[keep], w[keep]
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    def density_at_nodes(self) -> np.ndarray:
        return np.asarray(self.density(self.nodes), dtype=float).reshape(-1)

    def refined(self) -> "ContinuousPart":
        return ContinuousPart(self.density, self.inner, self.outer, 2 * self.n_nodes,
                              self.dim, self.label)


@dataclass(frozen=True)
class LevyMeasure:
    """Finite atoms plus an optional quadrature-discretized continuous part."""

    dim: int = 1
    locations: np.ndarray = None
    masses: np.ndarray = None
    continuous: Optional[ContinuousPart] = None

    def __post_init__(self):
        locs = np.zeros((0, self.dim)) if self.locations is None else as_points(self.locations, self.dim)
        locs = locs.reshape(-1, self.dim)
        masses = np.zeros(0) if self.masses is None else np.asarray(self.masses, dtype=float).reshape(-1)
        if len(masses) != len(locs):
            raise ValueError("atoms and masses differ in length")
        if self.continuous is not None and self.continuous.dim != self.dim:
            raise ValueError("continuous part has the wrong dimension")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def zero(cls, dim: int = 1) -> "LevyMeasure":
        return cls(dim)

    @classmethod
    def atoms(cls, locations: Sequence, masses: Sequence, dim: int = 1) -> "LevyMeasure":
        return cls(dim, locations, masses)

    @property
    def is_zero(self) -> bool:
        return len(self.masses) == 0 and self.continuous is None

    def discretize(self):
        """All jump locations and their weights as one finite measure."""
        if self.continuous is None:
            return self.locations, self.masses
        c = self.continuous
        return (np.concatenate([self.locations, c.nodes]),
                np.concatenate([self.masses, c.weights * c.density_at_nodes()]))

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of ``g`` (vectorized over an ``(m, d)`` array) against the measure."""
        locs, w = self.discretize()
        if len(w) == 0:
            return 0.0
        return float(np.sum(w * np.asarray(g(locs), dtype=float)))

    def total_mass(self) -> float:
        return float(np.sum(self.discretize()[1]))

    def scaled(self, c: float) -> "LevyMeasure":
        cont = None
        if self.continuous is not None and c != 0:
            base = self.continuous
            cont = ContinuousPart(lambda y, _d=base.density: c * _d(y), base.inner,
                                  base.outer, base.n_nodes, base.dim, base.label)
        if c == 0:
            return LevyMeasure(self.dim)
        return LevyMeasure(self.dim, self.locations, c * self.masses, cont)

    def refined(self) -> "LevyMeasure":
        if self.continuous is None:
            return self
        return LevyMeasure(self.dim, self.locations, self.masses, self.continuous.refined())


def _small_big(y: np.ndarray):
    r = np.linalg.norm(y, axis=-1)
    return np.minimum(r, r**2), np.where(r >= 1.0, r**2, 0.0), np.minimum(1.0, r**2)


@dataclass(frozen=True)
class MomentIntegrals:
    m_small: float
    m_big: float
    stable: bool = True


def moment_integrals(F: LevyMeasure, rtol: float = 1e-6) -> MomentIntegrals:
    """``(∫ |y|∧|y|² dF, ∫_{|y|>=1} |y|² dF)`` with a refinement stability flag.

    Atoms are summed exactly. The continuous part is integrated with its stored
    rule and once more with twice the nodes; ``stable`` is False when the two
    estimates disagree beyond ``rtol``.
    """
    m_small = F.integrate(lambda y: _small_big(y)[0])
    m_big = F.integrate(lambda y: _small_big(y)[1])
    stable = True
    if F.continuous is not None:
        Fr = F.refined()
        for a, b in ((m_small, Fr.integrate(lambda y: _small_big(y)[0])),
                     (m_big, Fr.integrate(lambda y: _small_big(y)[1]))):
            if not np.isfinite(b) or abs(a - b) > rtol * max(abs(b), 1e-300):
                stable = False
    return MomentIntegrals(m_small, m_big, stable and np.isfinite(m_small) and np.isfinite(m_big))


@dataclass(frozen=True)
class Triplet:
    """Local characteristics ``(b, σ, F)`` frozen at one time."""

    b: np.ndarray
    sigma: np.ndarray
    F: LevyMeasure

    @property
    def dim(self) -> int:
        return len(self.b)


def _const(value):
    return lambda s: value


@dataclass(frozen=True)
class TripletSchedule:
    """Time-dependent Lévy characteristics of a process with independent increments.

    ``b``, ``sigma`` and ``F`` are callables of time; ``sigma`` is the Gaussian
    covariance matrix (not a standard deviation).
    """

    b: Callable[[float], np.ndarray]
    sigma: Callable[[float], np.ndarray]
    F: Callable[[float], LevyMeasure]
    dim: int = 1
    horizon: float = 1.0
    cutoff_mode: str = "truncation"

    def __post_init__(self):
        if self.cutoff_mode not in CUTOFF_MODES:
            raise ValueError(f"cutoff_mode must be one of {CUTOFF_MODES}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def constant(cls, b=0.0, sigma=0.0, F: Optional[LevyMeasure] = None, dim: int = 1,
                 horizon: float = 1.0, cutoff_mode: str = "truncation") -> "TripletSchedule":
        b = np.broadcast_to(np.asarray(b, dtype=float), (dim,)).copy()
        sigma = np.asarray(sigma, dtype=float)
        sigma = sigma * np.eye(dim) if sigma.ndim == 0 else sigma.reshape(dim, dim)
        F = LevyMeasure(dim) if F is None else F
        return cls(_const(b), _const(sigma), _const(F), dim, horizon, cutoff_mode)

    def triplet(self, s: float) -> Triplet:
        b = np.broadcast_to(np.asarray(self.b(s), dtype=float), (self.dim,)).copy()
        sig = np.asarray(self.sigma(s), dtype=float)
        sig = sig * np.eye(self.dim) if sig.ndim == 0 else sig.reshape(self.dim, self.dim)
        return Triplet(b, sig, self.F(s))

    def identity_drift(self, s: float) -> np.ndarray:
        """Drift re-expressed for the identity cut-off: ``b + ∫ (y - χ(y)) F_s(dy)``."""
        tr = self.triplet(s)
        if self.cutoff_mode == "identity":
            return tr.b
        locs, w = tr.F.discretize()
        if len(w) == 0:
            return tr.b
        return tr.b + np.sum(w[:, None] * (locs - cutoff(locs, "truncation")), axis=0)


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Coefficient ``Φ(x, t)`` of ``dX = Φ(X_-, t) dL``; ``phi`` maps ``(..., d)`` to ``(..., d, d)``."""

    phi: Callable[[np.ndarray, float], np.ndarray]
    dim: int = 1
    bound: float = np.inf
    fd_step: float = 1e-6

    def __call__(self, x, t: float) -> np.ndarray:
        x = as_points(x, self.dim)
        out = np.asarray(self.phi(x, t), dtype=float)
        return np.broadcast_to(out, x.shape[:-1] + (self.dim, self.dim))

    @classmethod
    def constant(cls, matrix, dim: int = 1) -> "DiffusionCoefficient":
        m = np.asarray(matrix, dtype=float)
        m = m * np.eye(dim) if m.ndim == 0 else m.reshape(dim, dim)
        return cls(lambda x, t: m, dim, float(np.linalg.norm(m, 2)))


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1)
        if len(p) < 2 or p[0] != 0.0 or np.any(np.diff(p) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        object.__setattr__(self, "points", p)

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimeGrid":
        return cls(np.linspace(0.0, T, n + 1))

    @property
    def T(self) -> float:
        return float(self.points[-1])

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ProcessSpec:
    """Either a PII (``phi is None``) or a Lévy-driven diffusion.

    For the diffusion variant ``schedule`` holds the (homogeneous) driver.
    The initial law is the point mass at ``x0`` unless ``initial_sample`` is
    given, in which case path ``i`` starts at ``initial_sample[i % n]``.
    """

    schedule: TripletSchedule
    phi: Optional[DiffusionCoefficient] = None
    x0: np.ndarray = None
    initial_sample: Optional[np.ndarray] = None
    source: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        d = self.schedule.dim
        x0 = np.zeros(d) if self.x0 is None else as_points(self.x0, d).reshape(d)
        object.__setattr__(self, "x0", x0)
        if self.initial_sample is not None:
            object.__setattr__(self, "initial_sample", as_points(self.initial_sample, d).reshape(-1, d))
        if self.phi is not None and self.phi.dim != d:
            raise ValueError("phi and driver dimensions differ")

    @property
    def variant(self) -> str:
        return "pii" if self.phi is None else "levy_sde"

    @property
    def dim(self) -> int:
        return self.schedule.dim

    def initial_states(self, n: int, start: int = 0) -> np.ndarray:
        if self.initial_sample is None:
            return np.broadcast_to(self.x0, (n, self.dim)).copy()
        idx = (start + np.arange(n)) % len(self.initial_sample)
        return self.initial_sample[idx].copy()

    def same_initial_law(self, other: "ProcessSpec") -> bool:
        if (self.initial_sample is None) != (other.initial_sample is None):
            return False
        if self.initial_sample is None:
            return bool(np.array_equal(self.x0, other.x0))
        return bool(np.array_equal(self.initial_sample, other.initial_sample))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""
    where: Optional[float] = None

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail,
                "where": None if self.where is None else float(self.where)}


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _first_failure(name, items):
    """Collapse per-grid-point results ``(s, ok, detail)`` into one :class:`Check`."""
    for s, ok, detail in items:
        if not ok:
            return Check(name, False, detail, s)
    return Check(name, True)


def _measure_checks(F: LevyMeasure, s: float, cutoff_mode: str):
    out = []
    out.append((s, "masses_positive", bool(np.all(F.masses > 0)), "non-positive atom mass"))
    no_origin = not np.any(np.linalg.norm(F.locations, axis=-1) == 0) if len(F.masses) else True
    out.append((s, "no_atom_at_origin", no_origin, "atom at the origin"))
    if F.continuous is not None:
        dens = F.continuous.density_at_nodes()
        bad = np.flatnonzero(~(dens >= 0))
        out.append((s, "density_nonnegative", len(bad) == 0,
                    f"negative density at node {F.continuous.nodes[bad[0]].tolist()}" if len(bad) else ""))
    r = moment_integrals(F)
    m1 = F.integrate(lambda y: _small_big(y)[2])
    Fr = F.refined()
    m1r = Fr.integrate(lambda y: _small_big(y)[2])
    ok1 = np.isfinite(m1) and abs(m1 - m1r) <= 1e-6 * max(abs(m1r), 1e-300) if F.continuous else np.isfinite(m1)
    out.append((s, "levy_integrability", bool(ok1), f"∫(1∧|y|²)F = {m1!r} not stable under refinement"))
    if cutoff_mode == "identity":
        out.append((s, "identity_cutoff_integrability", bool(r.stable),
                    f"∫(|y|∧|y|²)F = {r.m_small!r} not stable under refinement"))
    return out


def _schedule_checks(sched: TripletSchedule, times, prefix=""):
    rows = {}
    for s in times:
        tr = sched.triplet(float(s))
        sig = tr.sigma
        sym = np.allclose(sig, sig.T, rtol=0, atol=EPS_PSD * max(1.0, np.abs(sig).max()))
        rows.setdefault("sigma_symmetric", []).append((s, sym, f"sigma not symmetric: {sig.tolist()}"))
        lam = float(np.linalg.eigvalsh(0.5 * (sig + sig.T)).min())
        rows.setdefault("sigma_psd", []).append((s, lam >= -EPS_PSD, f"min eigenvalue {lam:.6g}"))
        rows.setdefault("drift_finite", []).append((s, bool(np.all(np.isfinite(tr.b))), "non-finite drift"))
        for s_, name, ok, detail in _measure_checks(tr.F, float(s), sched.cutoff_mode):
            rows.setdefault(name, []).append((s_, ok, detail))
    return [_first_failure(prefix + name, items) for name, items in rows.items()]


def validation_x_grid(dim: int, radius: float = 10.0, n: int = 11) -> np.ndarray:
    if dim <= 2:
        axes = np.meshgrid(*([np.linspace(-radius, radius, n)] * dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)
    rng = np.random.default_rng(0)
    return rng.uniform(-radius, radius, size=(200, dim))


def validate_spec(spec: ProcessSpec, grid: TimeGrid, x_grid: Optional[np.ndarray] = None) -> ValidationReport:
    """Check the standing assumptions of ``spec`` on the times of ``grid``.

    Failures are returned as data; nothing is raised.
    """
    checks = _schedule_checks(spec.schedule, grid.points,
                              prefix="" if spec.variant == "pii" else "driver.")
    if spec.phi is not None:
        xs = validation_x_grid(spec.dim) if x_grid is None else as_points(x_grid, spec.dim).reshape(-1, spec.dim)
        items = []
        for t in grid.points:
            P = spec.phi(xs, float(t))
            norms = np.linalg.norm(P, ord=2, axis=(-2, -1))
            finite = bool(np.all(np.isfinite(P)))
            worst = float(norms.max()) if finite else np.inf
            items.append((float(t), finite and worst <= spec.phi.bound,
                          f"|phi| = {worst:.6g} exceeds bound {spec.phi.bound}"))
        checks.append(_first_failure("phi_bounded", items))
    return ValidationReport(tuple(checks))
