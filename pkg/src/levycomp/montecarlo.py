"""Seeded path simulation and Monte Carlo estimators.

Randomness comes from counter-based Philox substreams keyed by
``(seed, path block, step, component)``. Paths are processed in fixed blocks
of ``BLOCK`` paths, so the output depends only on the seed and never on how
blocks are distributed over threads. Two specs simulated with the same seed,
grid and step count consume identical normals and uniforms per
``(path, step)``, which is what makes paired differences valid.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import norm

from .generator import TestFunction
from .specs import (DiffusionCoefficient, ProcessSpec, TimeGrid, TripletSchedule,
                    as_points, cutoff)

BLOCK = 1 << 16
STEPS_PER_UNIT = 256
BLOWUP_BOUND = 1e8
_MASK64 = (1 << 64) - 1
_GAUSS, _COUNT, _MARKS = 0, 1, 2


def substream(seed: int, block: int, step: int, component: int) -> np.random.Generator:
    """Independent generator for one ``(block, step, component)`` cell."""
    if block >= 1 << 30 or step >= 1 << 32:
        raise ValueError("block or step index out of range for the substream key")
    key = [int(seed) & _MASK64, (block << 34) | (step << 2) | component]
    return np.random.Generator(np.random.Philox(key=key))


def poisson_from_uniform(u: np.ndarray, mu: float) -> np.ndarray:
    """Poisson(mu) draws by inverse CDF, monotone in ``u``."""
    if mu <= 0:
        return np.zeros(u.shape, dtype=np.int64)
    kmax = int(mu + 40 * math.sqrt(mu) + 40)
    k = np.arange(kmax + 1)
    logpmf = -mu + k * math.log(mu) - np.array([math.lgamma(i + 1) for i in k])
    cdf = np.cumsum(np.exp(logpmf))
    return np.minimum(np.searchsorted(cdf, u, side="right"), kmax)


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    stderr: float
    n: int
    level: float = 0.95

    @property
    def z(self) -> float:
        return float(norm.ppf(0.5 + self.level / 2))

    @property
    def interval(self):
        return self.mean - self.z * self.stderr, self.mean + self.z * self.stderr

    def to_dict(self):
        lo, hi = self.interval
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "level": self.level,
                "lo": lo, "hi": hi}


def estimate_from_values(values: np.ndarray, level: float = 0.95) -> EstimateCI:
    v = np.asarray(values, dtype=float).reshape(-1)
    n = len(v)
    if n == 0:
        raise ValueError("no samples")
    if np.all(v == v[0]):
        return EstimateCI(float(v[0]), 0.0, n, level)
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    return EstimateCI(float(np.mean(v)), sd / math.sqrt(n), n, level)


# ---------------------------------------------------------------------------
# stepping plan


@dataclass(frozen=True)
class _Step:
    t0: float
    dt: float
    mean: np.ndarray            # deterministic part of the increment
    gauss: Optional[np.ndarray]  # matrix A with A Aᵀ = σ dt
    lam_dt: float
    locs: np.ndarray
    cumprob: np.ndarray
    record: Optional[int]       # grid index reached at the end of this step


def _frozen_step(schedule: TripletSchedule, t0: float, dt: float, record) -> _Step:
    tr = schedule.triplet(t0 + 0.5 * dt)
    locs, w = tr.F.discretize()
    d = schedule.dim
    comp = np.zeros(d)
    lam = 0.0
    cumprob = np.zeros(0)
    if len(w):
        comp = np.sum(w[:, None] * cutoff(locs, schedule.cutoff_mode), axis=0)
        lam = float(np.sum(w))
        cumprob = np.cumsum(w) / lam if lam > 0 else cumprob
    sig = 0.5 * (tr.sigma + tr.sigma.T) * dt
    gauss = None
    if np.any(sig != 0):
        lamv, V = np.linalg.eigh(sig)
        gauss = V * np.sqrt(np.clip(lamv, 0.0, None))
    return _Step(t0, dt, (tr.b - comp) * dt, gauss, lam * dt, locs, cumprob, record)


def step_plan(schedule: TripletSchedule, grid: TimeGrid, steps_per_unit: int = STEPS_PER_UNIT,
              t0: float = 0.0):
    """Sub-steps of every grid cell, triplets frozen at the sub-step midpoints."""
    steps = []
    p = grid.points
    for i in range(len(p) - 1):
        length = p[i + 1] - p[i]
        m = max(1, math.ceil(length * steps_per_unit - 1e-9))
        edges = p[i] + length * np.arange(m + 1) / m
        for j in range(m):
            steps.append(_frozen_step(schedule, t0 + edges[j], edges[j + 1] - edges[j],
                                      i + 1 if j == m - 1 else None))
    return steps


def _increment(st: _Step, seed: int, block: int, k: int, n: int, d: int) -> np.ndarray:
    inc = np.broadcast_to(st.mean, (n, d)).copy()
    if st.gauss is not None:
        z = substream(seed, block, k, _GAUSS).standard_normal((n, d))
        inc += z @ st.gauss.T
    if st.lam_dt > 0:
        u = substream(seed, block, k, _COUNT).random(n)
        counts = poisson_from_uniform(u, st.lam_dt)
        total = int(counts.sum())
        if total:
            v = substream(seed, block, k, _MARKS).random(total)
            idx = np.minimum(np.searchsorted(st.cumprob, v, side="right"), len(st.cumprob) - 1)
            owner = np.repeat(np.arange(n), counts)
            for j in range(d):
                inc[:, j] += np.bincount(owner, weights=st.locs[idx, j], minlength=n)
    return inc


def sample_pii_increment(schedule: TripletSchedule, s: float, t: float, rng: np.random.Generator,
                         size: Optional[int] = None) -> np.ndarray:
    """Increment ``L_t - L_s`` with the triplet frozen at ``(s + t) / 2``.

    The continuous Lévy part enters as the finite compound-Poisson measure of
    its quadrature nodes; the compensator of the cut-off is subtracted from
    the drift.
    """
    if t < s:
        raise ValueError("need s <= t")
    n = 1 if size is None else int(size)
    d = schedule.dim
    st = _frozen_step(schedule, s, t - s, None)
    inc = np.broadcast_to(st.mean, (n, d)).copy()
    if st.gauss is not None:
        inc += rng.standard_normal((n, d)) @ st.gauss.T
    if st.lam_dt > 0:
        counts = poisson_from_uniform(rng.random(n), st.lam_dt)
        total = int(counts.sum())
        if total:
            idx = np.minimum(np.searchsorted(st.cumprob, rng.random(total), side="right"),
                             len(st.cumprob) - 1)
            owner = np.repeat(np.arange(n), counts)
            for j in range(d):
                inc[:, j] += np.bincount(owner, weights=st.locs[idx, j], minlength=n)
    return inc[0] if size is None else inc


# ---------------------------------------------------------------------------
# path sets


def spec_hash(spec: ProcessSpec) -> Optional[str]:
    if spec.source is None:
        return None
    blob = json.dumps(spec.source, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class PathSet:
    times: TimeGrid
    states: np.ndarray  # (n_paths, n_times, d)
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def at(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.times.points, t, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise KeyError(f"time {t} is not on the grid")
        return self.states[:, idx[0], :]

    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]

    def save(self, prefix) -> None:
        """Raw little-endian float64 states plus a JSON sidecar."""
        prefix = Path(prefix)
        np.ascontiguousarray(self.states, dtype="<f8").tofile(prefix.with_suffix(".bin"))
        side = {"shape": list(self.states.shape), "dtype": "<f8", "seed": self.seed,
                "times": self.times.points.tolist(), "meta": self.meta}
        prefix.with_suffix(".json").write_text(json.dumps(side, sort_keys=True, indent=2))

    @classmethod
    def load(cls, prefix) -> "PathSet":
        prefix = Path(prefix)
        side = json.loads(prefix.with_suffix(".json").read_text())
        states = np.fromfile(prefix.with_suffix(".bin"), dtype=side["dtype"]).reshape(side["shape"])
        return cls(TimeGrid(np.array(side["times"])), states, side["seed"], side["meta"])


def _run_block(spec: ProcessSpec, plan, seed: int, block: int, n: int, n_times: int, bound: float):
    d = spec.dim
    x = spec.initial_states(n, block * BLOCK)
    out = np.empty((n, n_times, d))
    out[:, 0] = x
    blown = np.zeros(n, dtype=bool)
    phi = spec.phi
    for k, st in enumerate(plan):
        dL = _increment(st, seed, block, k, n, d)
        if phi is None:
            x = x + dL
        else:
            x = x + np.einsum("njk,nk->nj", phi(x, st.t0), dL)
            blown |= ~np.all(np.abs(x) <= bound, axis=-1)
        if st.record is not None:
            out[:, st.record] = x
    return out, int(blown.sum())


def simulate(spec: ProcessSpec, grid: TimeGrid, n_paths: int, seed: int,
             steps_per_unit: int = STEPS_PER_UNIT, threads: int = 1, t0: float = 0.0,
             blowup_bound: float = BLOWUP_BOUND) -> PathSet:
    """Simulate either variant on ``grid``; ``t0`` shifts the clock of the coefficients."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    plan = step_plan(spec.schedule, grid, steps_per_unit, t0)
    n_blocks = -(-n_paths // BLOCK)
    sizes = [min(BLOCK, n_paths - b * BLOCK) for b in range(n_blocks)]

    def work(b):
        return _run_block(spec, plan, seed, b, sizes[b], len(grid), blowup_bound)

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_blocks)))
    else:
        results = [work(b) for b in range(n_blocks)]
    states = np.concatenate([r[0] for r in results], axis=0)
    meta = {"variant": spec.variant, "steps": len(plan), "steps_per_unit": steps_per_unit,
            "cutoff_mode": spec.schedule.cutoff_mode, "block_size": BLOCK, "t0": t0,
            "blown_up_paths": sum(r[1] for r in results), "spec_hash": spec_hash(spec),
            "discarded_small_jump_variance": discarded_small_jump_variance(spec.schedule, grid, t0)}
    return PathSet(grid, states, seed, meta)


def discarded_small_jump_variance(schedule: TripletSchedule, grid: TimeGrid, t0: float = 0.0) -> float:
    """``∫∫_{|y| < inner} |y|² F_s(dy) ds`` dropped by the quadrature (1-D densities only)."""
    F = schedule.F(t0 + 0.5 * grid.T)
    c = F.continuous
    if c is None or c.dim != 1:
        return 0.0
    u, w = np.polynomial.legendre.leggauss(64)
    lo, hi = math.log(c.inner * 1e-8), math.log(c.inner)
    r = np.exp(0.5 * (hi - lo) * u + 0.5 * (hi + lo))
    wr = 0.5 * (hi - lo) * w * r
    dens = np.asarray(c.density(r[:, None]), dtype=float) + np.asarray(c.density(-r[:, None]), dtype=float)
    return float(np.sum(wr * r**2 * dens) * grid.T)


def simulate_pii(schedule: TripletSchedule, grid: TimeGrid, n_paths: int, seed: int,
                 **kwargs) -> PathSet:
    """Paths of the PII started at 0."""
    return simulate(ProcessSpec(schedule), grid, n_paths, seed, **kwargs)


def simulate_sde(phi: DiffusionCoefficient, driver: TripletSchedule, x0, grid: TimeGrid,
                 n_paths: int, seed: int, **kwargs) -> PathSet:
    """Explicit Euler for ``dX = Φ(X_-, t) dL`` with ``Φ`` taken at the left endpoint."""
    return simulate(ProcessSpec(driver, phi, x0), grid, n_paths, seed, **kwargs)


# ---------------------------------------------------------------------------
# estimators


def estimate_expectation(states, f: TestFunction, level: float = 0.95) -> EstimateCI:
    """Sample mean of ``f`` over the states with standard error ``sd / sqrt(n)``."""
    pts = as_points(states, f.dim).reshape(-1, f.dim)
    vals = np.asarray(f.value(pts), dtype=float)
    bad = np.flatnonzero(~np.isfinite(vals))
    if len(bad):
        raise ValueError(f"non-finite f value at state {pts[bad[0]].tolist()}")
    return estimate_from_values(vals, level)


def _symbol_once(spec, t, x, xi, h, n_paths, seed, steps_per_unit, threads, level):
    local = ProcessSpec(spec.schedule, spec.phi, x)
    grid = TimeGrid(np.array([0.0, h]))
    paths = simulate(local, grid, n_paths, seed, steps_per_unit, threads, t0=t)
    phase = (paths.terminal() - local.x0) @ xi
    z = -(np.exp(1j * phase) - 1.0) / h
    return estimate_from_values(z.real, level), estimate_from_values(z.imag, level)


def symbol_estimate(spec: ProcessSpec, t: float, x, xi, h: float = 1e-3, n_paths: int = 10**6,
                    seed: int = 0, richardson: bool = False, steps_per_unit: int = STEPS_PER_UNIT,
                    threads: int = 1, level: float = 0.95):
    """Estimate of ``-(E exp(i<X_{t+h} - x, ξ>) - 1) / h`` as ``(real, imag)`` estimates.

    With ``richardson`` the estimates at ``h`` and ``h/2`` are combined as
    ``2 p(h/2) - p(h)`` to cancel the first-order bias.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_points(x, spec.dim).reshape(spec.dim)
    xi = as_points(xi, spec.dim).reshape(spec.dim)
    re, im = _symbol_once(spec, t, x, xi, h, n_paths, seed, steps_per_unit, threads, level)
    if not richardson:
        return re, im
    re2, im2 = _symbol_once(spec, t, x, xi, h / 2, n_paths, seed + 1, steps_per_unit, threads, level)

    def rich(a, b):
        return EstimateCI(2 * b.mean - a.mean, math.hypot(2 * b.stderr, a.stderr), a.n, level)

    return rich(re, re2), rich(im, im2)
