"""Generator-dominance scans, order verification and evolution-identity residuals."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .generator import (TestFunction, apply_generator_pii, cumulant, generator_difference,
                        integrated_cumulant)
from .montecarlo import (STEPS_PER_UNIT, EstimateCI, estimate_from_values, simulate)
from .orders import ORDER_TOL, family_membership_probe
from .spectral import (BoundaryMassWarning, BOUNDARY_MASS_TOL, GridFunction, apply_generator_grid,
                       fourier_multiplier_transition, sample_on_grid, spectral_grid,
                       transition_multiplier)
from .specs import ProcessSpec, TimeGrid, TripletSchedule, as_points

ALPHA = 0.01
MARGIN_TOL = 1e-4
SPECTRAL_TOL = 1e-7
VERDICT_RANK = {"supported": 0, "inconclusive": 1, "violated": 2}


class BlowUpError(RuntimeError):
    """Simulated states left the configured bound."""


def _member_name(f, i):
    return f"{i:02d}:{getattr(f, 'name', 'f')}"


# ---------------------------------------------------------------------------
# generator dominance


@dataclass
class DominanceReport:
    checked: int
    violations: list          # (s, x, member index, margin)
    min_margin: float
    s_grid: list
    min_margin_by_s: list
    min_margin_by_member: list
    member_names: list
    witness: Optional[dict] = None
    tol: float = ORDER_TOL

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {"checked": self.checked, "passed": self.passed, "tol": self.tol,
                "min_margin": self.min_margin, "witness": self.witness,
                "s_grid": self.s_grid, "min_margin_by_s": self.min_margin_by_s,
                "members": [{"member": n, "min_margin": m}
                            for n, m in zip(self.member_names, self.min_margin_by_member)],
                "violations": [{"s": s, "x": x, "member": i, "margin": m}
                               for s, x, i, m in self.violations]}


def check_generator_dominance(specA: ProcessSpec, specB: ProcessSpec, family, s_grid, x_grid,
                              tol: float = ORDER_TOL) -> DominanceReport:
    """Scan ``(B_s - A_s) f(x) >= -tol`` over the finite product grid."""
    d = specA.dim
    xs = as_points(x_grid, d).reshape(-1, d)
    times = [float(s) for s in np.atleast_1d(s_grid)]
    members = list(family)
    violations = []
    by_s = []
    by_member = np.full(len(members), np.inf)
    worst = (np.inf, None)
    for s in times:
        row_min = np.inf
        for i, f in enumerate(members):
            m = np.asarray(generator_difference(specA, specB, s, f, xs), dtype=float)
            if not np.all(np.isfinite(m)):
                raise FloatingPointError(f"non-finite generator difference for {f.name} at s={s}")
            j = int(np.argmin(m))
            row_min = min(row_min, float(m[j]))
            by_member[i] = min(by_member[i], float(m[j]))
            if m[j] < worst[0]:
                worst = (float(m[j]), {"s": s, "x": xs[j].tolist(), "member": i, "name": f.name})
            for k in np.flatnonzero(m < -tol):
                violations.append((s, xs[k].tolist(), i, float(m[k])))
        by_s.append(row_min)
    return DominanceReport(len(times) * len(members) * len(xs), violations, float(worst[0]),
                           times, by_s, by_member.tolist(), [f.name for f in members], worst[1], tol)


# ---------------------------------------------------------------------------
# order verification


@dataclass(frozen=True)
class MemberVerdict:
    member: str
    verdict: str
    margin: float
    lhs: Optional[EstimateCI] = None
    rhs: Optional[EstimateCI] = None
    paired_diff: Optional[EstimateCI] = None
    witness_x: Optional[float] = None

    @property
    def ci(self):
        if self.paired_diff is None:
            return self.margin, self.margin
        return self.paired_diff.interval

    def to_dict(self):
        out = {"member": self.member, "verdict": self.verdict, "margin": self.margin}
        for k in ("lhs", "rhs", "paired_diff"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v.to_dict()
        if self.witness_x is not None:
            out["witness_x"] = self.witness_x
        return out


@dataclass
class OrderReport:
    method: str
    members: list
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def overall(self) -> str:
        if not self.members:
            return "inconclusive"
        return max((m.verdict for m in self.members), key=VERDICT_RANK.__getitem__)

    def verdicts(self) -> dict:
        return {m.member: m.verdict for m in self.members}

    def to_dict(self):
        return {"method": self.method, "overall": self.overall, "params": self.params,
                "notes": self.notes, "members": [m.to_dict() for m in self.members]}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member", "verdict", "margin", "ci_low", "ci_high"])
            for m in self.members:
                lo, hi = m.ci
                w.writerow([m.member, m.verdict, repr(m.margin), repr(lo), repr(hi)])


def mc_verdict(diff: EstimateCI, alpha: float = ALPHA, margin_tol: float = MARGIN_TOL) -> str:
    """One-sided z decision on a paired difference ``E f(Y) - E f(X)``."""
    z = float(norm.ppf(1 - alpha))
    if diff.mean + z * diff.stderr < 0:
        return "violated"
    if diff.mean - z * diff.stderr > -margin_tol:
        return "supported"
    return "inconclusive"


def verify_order_mc(specA: ProcessSpec, specB: ProcessSpec, family, t: float, n_paths: int,
                    seed: int, alpha: float = ALPHA, margin_tol: float = MARGIN_TOL,
                    threads: int = 1, steps_per_unit: int = STEPS_PER_UNIT) -> OrderReport:
    """Paired Monte Carlo test of ``E f(X_t) <= E f(Y_t)`` for every member.

    Both specs are simulated from the same seed so member differences use
    common random numbers. Confidence intervals in the report are two-sided at
    level ``1 - 2α``, whose endpoints are the one-sided bounds of the test.
    """
    if specA.dim != specB.dim:
        raise ValueError("specs differ in dimension")
    if not specA.same_initial_law(specB):
        raise ValueError("specs must share the initial law")
    grid = TimeGrid(np.array([0.0, t]))
    level = 1 - 2 * alpha
    states = []
    for spec in (specA, specB):
        ps = simulate(spec, grid, n_paths, seed, steps_per_unit, threads)
        if ps.meta["blown_up_paths"]:
            raise BlowUpError(f"{ps.meta['blown_up_paths']} paths exceeded the blow-up bound")
        states.append(ps.terminal())
    members = []
    for i, f in enumerate(family):
        va = np.asarray(f.value(states[0]), dtype=float)
        vb = np.asarray(f.value(states[1]), dtype=float)
        for v, st in ((va, states[0]), (vb, states[1])):
            bad = np.flatnonzero(~np.isfinite(v))
            if len(bad):
                raise ValueError(f"non-finite value of {f.name} at state {st[bad[0]].tolist()}")
        diff = estimate_from_values(vb - va, level)
        members.append(MemberVerdict(_member_name(f, i), mc_verdict(diff, alpha, margin_tol),
                                     diff.mean, estimate_from_values(va, level),
                                     estimate_from_values(vb, level), diff))
    params = {"t": t, "n_paths": n_paths, "seed": seed, "alpha": alpha, "margin_tol": margin_tol,
              "steps_per_unit": steps_per_unit}
    return OrderReport("mc", members, params)


def _on_grid(schedA, schedB, s, t, grid):
    if grid is None:
        ca, dxa, n = spectral_grid(schedA, s, t)
        cb, dxb, _ = spectral_grid(schedB, s, t)
        return ca, max(dxa, dxb), n
    return grid


def verify_order_spectral(schedA: TripletSchedule, schedB: TripletSchedule, family, s: float,
                          t: float, grid=None, tol: float = SPECTRAL_TOL,
                          window: float = 0.5) -> OrderReport:
    """Deterministic check of ``S_{s,t}f <= T_{s,t}f`` on the interior of a spectral grid.

    ``S`` is the evolution of ``schedA`` and ``T`` that of ``schedB``. Members
    that do not decay are periodized by the transform, so margins are read only
    on ``|x - c| <= window * half_width``.
    """
    if schedA.dim != 1 or schedB.dim != 1:
        raise ValueError("spectral verification is one-dimensional")
    c, dx, n = _on_grid(schedA, schedB, s, t, grid)
    members, heavy = [], []
    for i, f in enumerate(family):
        fg = sample_on_grid(f, c, dx, n)
        if fg.boundary_mass() > BOUNDARY_MASS_TOL:
            heavy.append(f.name)
        sa = fourier_multiplier_transition(schedA, s, t, fg, check_boundary=False)
        tb = fourier_multiplier_transition(schedB, s, t, fg, check_boundary=False)
        mask = fg.interior(window)
        diff = (tb.values - sa.values)[mask]
        j = int(np.argmin(diff))
        margin = float(diff[j])
        members.append(MemberVerdict(_member_name(f, i), "violated" if margin < -tol else "supported",
                                     margin, witness_x=float(fg.x[mask][j])))
    rep = OrderReport("spectral", members, {"s": s, "t": t, "tol": tol, "center": c, "spacing": dx,
                                            "n": n, "window": window})
    if heavy:
        msg = f"members not decaying at the box edge (interior window used): {', '.join(heavy)}"
        warnings.warn(msg, BoundaryMassWarning, stacklevel=2)
        rep.notes.append(msg)
    return rep


# ---------------------------------------------------------------------------
# residuals of the evolution identities


def _grid_function(f, grid) -> GridFunction:
    if isinstance(f, GridFunction):
        return f
    c, dx, n = grid
    return sample_on_grid(f, c, dx, n)


def representation_residual(schedA: TripletSchedule, schedB: TripletSchedule, f, s: float,
                            t: float, r_nodes: int = 32, grid=None, panel_nodes: int = 2) -> float:
    """Sup-norm gap between ``T_{s,t}f - S_{s,t}f`` and ``∫_s^t T_{s,r}(B_r - A_r)S_{r,t}f dr``.

    Every operator is a Fourier multiplier, so the comparison is done per
    frequency and transformed back once. The ``r`` integral is composite
    Gauss-Legendre with ``panel_nodes`` nodes per panel, so doubling
    ``r_nodes`` halves the panel width and the error falls algebraically.
    """
    if r_nodes % panel_nodes:
        raise ValueError("r_nodes must be a multiple of panel_nodes")
    if grid is None and not isinstance(f, GridFunction):
        grid = _on_grid(schedA, schedB, s, t, None)
    fg = _grid_function(f, grid)
    om = fg.omega[:, None]
    lhs = transition_multiplier(schedB, s, t, fg.omega) - transition_multiplier(schedA, s, t, fg.omega)
    u, w = np.polynomial.legendre.leggauss(panel_nodes)
    edges = np.linspace(s, t, r_nodes // panel_nodes + 1)
    rhs = np.zeros(fg.n, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        for r, wr in zip(0.5 * (b - a) * u + 0.5 * (a + b), 0.5 * (b - a) * w):
            r = float(r)
            gap = cumulant(schedB, r, om) - cumulant(schedA, r, om)
            rhs += wr * np.exp(integrated_cumulant(schedB, s, r, om)) * gap * \
                np.exp(integrated_cumulant(schedA, r, t, om))
    spec = np.fft.fft(fg.values) * (lhs - rhs)
    return float(np.abs(np.fft.ifft(spec)).max())


def forward_equation_residual(sched: TripletSchedule, f: TestFunction, s: float, t: float,
                              h: float, grid=None, window: float = 0.5) -> float:
    """Sup over the grid interior of ``|(T_{s,t+h}f - T_{s,t}f)/h - T_{s,t}A_t f|``."""
    grid = spectral_grid(sched, s, t + h) if grid is None else grid
    fg = _grid_function(f, grid)
    lhs = (fourier_multiplier_transition(sched, s, t + h, fg, check_boundary=False).values
           - fourier_multiplier_transition(sched, s, t, fg, check_boundary=False).values) / h
    af = fg.with_values(apply_generator_pii(sched.triplet(t), f, fg.x, sched.cutoff_mode))
    rhs = fourier_multiplier_transition(sched, s, t, af, check_boundary=False).values
    return float(np.abs(lhs - rhs)[fg.interior(window)].max())


def backward_equation_residual(sched: TripletSchedule, f, s: float, t: float, h: float,
                               grid=None, window: float = 0.5) -> float:
    """Sup over the grid interior of ``|(T_{s+h,t}f - T_{s,t}f)/h + A_s T_{s,t}f|``."""
    if s + h > t:
        raise ValueError("need s + h <= t")
    grid = spectral_grid(sched, s, t) if grid is None else grid
    fg = _grid_function(f, grid)
    tf = fourier_multiplier_transition(sched, s, t, fg, check_boundary=False)
    lhs = (fourier_multiplier_transition(sched, s + h, t, fg, check_boundary=False).values
           - tf.values) / h
    rhs = -apply_generator_grid(sched, s, tf).values
    return float(np.abs(lhs - rhs)[fg.interior(window)].max())


def monotonicity_probe(sched: TripletSchedule, family, s: float, t: float, grid=None,
                       tag: Optional[str] = None, window: float = 0.5,
                       tol: float = ORDER_TOL) -> dict:
    """Whether ``S_{s,t}f`` stays in the family's class, per member.

    Derivatives of the image are images of the derivatives (the operator
    commutes with translations), so they are transformed alongside ``f``.
    """
    if sched.dim != 1:
        raise ValueError("monotonicity probe is one-dimensional")
    tag = tag or family.tag
    c, dx, n = spectral_grid(sched, s, t) if grid is None else grid
    out = {}
    for i, f in enumerate(family):
        x = c + (np.arange(n) - n // 2) * dx
        pts = x[:, None]
        parts = [f.value(pts), f.grad(pts)[:, 0], f.hess(pts)[:, 0, 0]]
        img = [fourier_multiplier_transition(sched, s, t, GridFunction(c, dx, np.asarray(v, float)),
                                             check_boundary=False).values for v in parts]
        mask = np.abs(x - c) <= window * 0.5 * n * dx + 1e-12
        xm = x[mask]
        v, g, hh = (a[mask] for a in img)
        image = TestFunction(lambda p, v=v: np.interp(p[..., 0], xm, v),
                             lambda p, g=g: np.interp(p[..., 0], xm, g)[..., None],
                             lambda p, hh=hh: np.interp(p[..., 0], xm, hh)[..., None, None],
                             1, name=f"S({f.name})")
        out[_member_name(f, i)] = family_membership_probe(image, tag, xm, tol)
    return out


# ---------------------------------------------------------------------------
# modified norms and the kernel condition


@dataclass(frozen=True)
class FiniteMeasure:
    """Finite measure given by quadrature points ``(m, d)`` and weights ``(m,)``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        p = np.asarray(self.points, dtype=float)
        p = p[:, None] if p.ndim == 1 else p
        if len(p) != len(w) or np.any(w < 0):
            raise ValueError("points and nonnegative weights must match")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    @classmethod
    def atoms(cls, points, weights) -> "FiniteMeasure":
        return cls(np.asarray(points, float), np.asarray(weights, float))

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0, n: int = 32) -> "FiniteMeasure":
        """Uniform probability on ``[a, b]`` by Gauss-Legendre."""
        u, w = np.polynomial.legendre.leggauss(n)
        return cls(0.5 * (b - a) * u + 0.5 * (a + b), w / 2)

    @classmethod
    def gaussian(cls, mean: float = 0.0, sd: float = 1.0, n: int = 64) -> "FiniteMeasure":
        """Normal law by Gauss-Hermite (probabilists' weight)."""
        u, w = np.polynomial.hermite_e.hermegauss(n)
        return cls(mean + sd * u, w / math.sqrt(2 * math.pi))


def _evaluate(f, pts: np.ndarray):
    if isinstance(f, TestFunction):
        return np.asarray(f.value(pts))
    return np.asarray(f(pts[..., 0] if pts.shape[-1] == 1 else pts))


def modified_lp_norm(f, nu: FiniteMeasure, p: float, rho: float, y_grid) -> float:
    """``max_y (1 + |y|)^{-ρ/p} (∫ |f(x + y)|^p ν(dx))^{1/p}`` over ``y_grid``."""
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf)")
    ys = as_points(y_grid, nu.dim).reshape(-1, nu.dim)
    best = 0.0
    for y in ys:
        vals = np.abs(_evaluate(f, nu.points + y)) ** p
        integral = math.fsum(nu.weights * vals)
        weight = (1.0 + float(np.linalg.norm(y))) ** (-rho / p)
        best = max(best, weight * integral ** (1.0 / p))
    return best


def kernel_condition_K(k: Callable, nu: FiniteMeasure, s: float, t: float, y_grid) -> float:
    """``max_y (1 + |y|)^{-1} (∫ |k_{s,t}(y, y + z)|² ν(dz))^{1/2}`` over ``y_grid``.

    ``k(s, t, y, x)`` is vectorized over the last argument. The result is a
    finite-grid estimate; finiteness of the true supremum is not implied.
    """
    ys = as_points(y_grid, nu.dim).reshape(-1, nu.dim)
    best = 0.0
    for y in ys:
        yy = y[0] if nu.dim == 1 else y
        zz = nu.points + y
        vals = np.abs(np.asarray(k(s, t, yy, zz[:, 0] if nu.dim == 1 else zz))) ** 2
        vals = np.broadcast_to(vals, nu.weights.shape)
        best = max(best, math.sqrt(math.fsum(nu.weights * vals)) / (1.0 + float(np.linalg.norm(y))))
    return best
