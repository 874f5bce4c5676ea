"""Finite test-function families and structural sufficient conditions.

Pools (all C² with analytic derivatives, β the soft-plus smoothing):

* ``ramp``    Π_j s((x_j - k_j)/w), s the logistic sigmoid; increasing, bounded.
* ``dramp``   Π_j s(-(x_j - k_j)/w); supermodular, decreasing.
* ``hinge``   h_β(<a, x> - k), h_β(u) = β log(1 + e^{u/β}); convex, b-bounded.
* ``quad``    ½ (x - c)ᵀ Q (x - c) with Q psd; convex, not b-bounded.
* ``hprod``   h_β(x_i - k_i) h_β(x_j - k_j); directionally convex, increasing.

Membership of each pool in each order family is fixed in ``_POOLS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .generator import FAMILY_TAGS, TestFunction
from .specs import EPS_PSD, LevyMeasure, ProcessSpec, as_points

BETA = 0.05
ORDER_TOL = 1e-9

_INTERSECTIONS = {"icx": ("cx", "st"), "idcx": ("dcx", "st"), "ism": ("sm", "st")}


def closure(tags) -> frozenset:
    """Close a tag set under the intersection definitions and dcx ⊂ sm."""
    tags = set(tags)
    for t, (a, b) in _INTERSECTIONS.items():
        if t in tags:
            tags |= {a, b}
        elif a in tags and b in tags:
            tags.add(t)
    if "dcx" in tags:
        tags.add("sm")
    if "idcx" in tags:
        tags.add("ism")
    return frozenset(tags)


# ---------------------------------------------------------------------------
# primitive members


def softplus(u, beta=BETA):
    return beta * np.logaddexp(0.0, u / beta)


def ramp(k, w: float = 0.5, sign: float = 1.0) -> TestFunction:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    d = len(k)

    def parts(x):
        u = sign * (x - k) / w
        s, r = expit(u), expit(-u)  # r = 1 - s without cancellation
        ds = sign * s * r / w
        d2s = s * r * (r - s) / w**2
        return s, ds, d2s

    def value(x):
        return np.prod(parts(x)[0], axis=-1)

    def grad(x):
        s, ds, _ = parts(x)
        out = np.empty(x.shape)
        for j in range(d):
            out[..., j] = ds[..., j] * np.prod(np.delete(s, j, axis=-1), axis=-1)
        return out

    def hess(x):
        s, ds, d2s = parts(x)
        out = np.empty(x.shape + (d,))
        for i in range(d):
            for j in range(d):
                if i == j:
                    out[..., i, i] = d2s[..., i] * np.prod(np.delete(s, i, axis=-1), axis=-1)
                else:
                    rest = np.delete(s, [i, j], axis=-1)
                    out[..., i, j] = ds[..., i] * ds[..., j] * np.prod(rest, axis=-1)
        return out

    tags = {"st", "sm"} if sign > 0 else {"sm"}
    name = ("ramp" if sign > 0 else "dramp") + f"(k={np.round(k, 3).tolist()}, w={w:g})"
    return TestFunction(value, grad, hess, d, closure(tags), 1.0, name,
                        {"pool": "ramp" if sign > 0 else "dramp", "k": k.tolist(), "w": w})


def hinge(a, k: float = 0.0, beta: float = BETA) -> TestFunction:
    """Soft-plus hinge ``h_β(<a, x> - k)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = len(a)

    def value(x):
        return softplus(x @ a - k, beta)

    def grad(x):
        return expit((x @ a - k) / beta)[..., None] * a

    def hess(x):
        u = (x @ a - k) / beta
        return (expit(u) * expit(-u) / beta)[..., None, None] * np.outer(a, a)

    tags = {"cx"}
    if np.all(a >= 0) or np.all(a <= 0):
        tags |= {"dcx", "sm"}
    if np.all(a >= 0):
        tags.add("st")
    bb = max(beta * np.log(2.0) + abs(k), float(np.linalg.norm(a)))
    return TestFunction(value, grad, hess, d, closure(tags), bb,
                        f"hinge(a={np.round(a, 3).tolist()}, k={k:.3g})",
                        {"pool": "hinge", "a": a.tolist(), "k": float(k), "beta": beta})


def quadratic(Q, c=None) -> TestFunction:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    d = Q.shape[0]
    Q = 0.5 * (Q + Q.T)
    c = np.zeros(d) if c is None else np.atleast_1d(np.asarray(c, dtype=float))

    def value(x):
        y = x - c
        return 0.5 * np.einsum("...j,jk,...k->...", y, Q, y)

    tags = {"cx"}
    if np.all(Q - np.diag(np.diag(Q)) >= 0):
        tags |= {"dcx", "sm"}
    return TestFunction(value, lambda x: (x - c) @ Q, lambda x: np.broadcast_to(Q, x.shape + (d,)).copy(),
                        d, closure(tags), None, f"quad(c={np.round(c, 3).tolist()})",
                        {"pool": "quad", "Q": Q.tolist(), "c": c.tolist()})


def square(dim: int = 1) -> TestFunction:
    """``|x|²``, the canonical unbounded convex member."""
    f = quadratic(2.0 * np.eye(dim))
    return TestFunction(f.value, f.grad, f.hess, dim, f.family_tags, None, "square",
                        {"pool": "quad", "Q": (2.0 * np.eye(dim)).tolist(), "c": [0.0] * dim})


def exact_hinge(dim: int = 1, k: float = 0.0) -> TestFunction:
    """``max(x_1 - k, 0)`` without smoothing (second derivative zero a.e.)."""
    def value(x):
        return np.maximum(x[..., 0] - k, 0.0)

    def grad(x):
        out = np.zeros(x.shape)
        out[..., 0] = (x[..., 0] > k).astype(float)
        return out

    return TestFunction(value, grad, lambda x: np.zeros(x.shape + (dim,)), dim,
                        closure({"cx", "st", "dcx", "sm"}), 1.0 + abs(k), f"max(x1-{k:g},0)",
                        {"pool": "exact_hinge", "k": k})


def hinge_product(i: int, j: int, ki: float, kj: float, dim: int, beta: float = BETA) -> TestFunction:
    ei, ej = np.eye(dim)[i], np.eye(dim)[j]
    g1, g2 = hinge(ei, ki, beta), hinge(ej, kj, beta)

    def value(x):
        return g1.value(x) * g2.value(x)

    def grad(x):
        return g1.grad(x) * g2.value(x)[..., None] + g2.grad(x) * g1.value(x)[..., None]

    def hess(x):
        a, b = g1.grad(x), g2.grad(x)
        return (g1.hess(x) * g2.value(x)[..., None, None] + g2.hess(x) * g1.value(x)[..., None, None]
                + a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :])

    return TestFunction(value, grad, hess, dim, closure({"dcx", "st"}), None,
                        f"hprod({i},{j})", {"pool": "hprod", "i": i, "j": j, "ki": ki, "kj": kj})


# ---------------------------------------------------------------------------
# families


_POOLS = {
    "st": ("ramp", "hinge_pos"),
    "cx": ("hinge", "quad"),
    "icx": ("hinge_pos",),
    "sm": ("ramp", "dramp", "hinge_pos", "hinge_neg"),
    "ism": ("ramp", "hinge_pos"),
    "dcx": ("hinge_pos", "hinge_neg", "hprod"),
    "idcx": ("hinge_pos", "hprod"),
}


def _canonical(tag: str, dim: int, beta: float):
    e1 = np.eye(dim)[0]
    if tag == "cx":
        return [square(dim), hinge(e1, 0.0, beta), hinge(-e1, 0.0, beta)]
    if tag in ("st", "ism"):
        return [ramp(np.zeros(dim))]
    if tag in ("icx", "idcx"):
        return [hinge(np.ones(dim), 0.0, beta)]
    if tag in ("sm", "dcx"):
        return [hinge(np.ones(dim), 0.0, beta)]
    return []


def _draw(pool: str, dim: int, rng: np.random.Generator, beta: float) -> TestFunction:
    if pool == "ramp":
        return ramp(rng.uniform(-2, 2, dim), float(rng.uniform(0.3, 1.5)))
    if pool == "dramp":
        return ramp(rng.uniform(-2, 2, dim), float(rng.uniform(0.3, 1.5)), sign=-1.0)
    if pool == "hinge":
        a = rng.normal(size=dim)
        return hinge(a / np.linalg.norm(a), float(rng.uniform(-2, 2)), beta)
    if pool in ("hinge_pos", "hinge_neg"):
        a = np.abs(rng.normal(size=dim))
        a /= np.linalg.norm(a)
        return hinge(a if pool == "hinge_pos" else -a, float(rng.uniform(-2, 2)), beta)
    if pool == "quad":
        G = rng.normal(size=(dim, dim))
        return quadratic(G @ G.T / dim, rng.uniform(-1, 1, dim))
    if pool == "hprod":
        i, j = (0, 0) if dim == 1 else tuple(int(v) for v in rng.choice(dim, 2, replace=False))
        return hinge_product(i, j, float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)), dim, beta)
    raise ValueError(pool)


@dataclass(frozen=True)
class TestFamily:
    __test__ = False

    tag: str
    members: tuple
    seed: int
    beta: float = BETA

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def names(self):
        return [m.name for m in self.members]


def make_test_family(tag: str, dim: int, count: int, seed: int, beta: float = BETA,
                     canonical: bool = True) -> TestFamily:
    """Draw ``count`` members for ``tag`` reproducibly from ``seed``.

    With ``canonical`` the family starts with fixed members (for ``cx``:
    ``|x|²``, ``h_β(x_1)``, ``h_β(-x_1)``) and is filled from the random pools.
    """
    if tag not in FAMILY_TAGS:
        raise ValueError(f"unknown order family {tag!r}")
    if count < 1 or dim < 1:
        raise ValueError("count and dim must be positive")
    rng = np.random.default_rng(seed)
    members = _canonical(tag, dim, beta)[:count] if canonical else []
    pools = _POOLS[tag]
    i = 0
    while len(members) < count:
        members.append(_draw(pools[i % len(pools)], dim, rng, beta))
        i += 1
    for m in members:
        if tag not in m.family_tags:
            raise AssertionError(f"pool produced {m.name} outside {tag}")
    return TestFamily(tag, tuple(members), seed, beta)


def family_membership_probe(f: TestFunction, tag: str, probe_grid, tol: float = ORDER_TOL) -> bool:
    """Numerical membership test on a finite set of points."""
    pts = as_points(probe_grid, f.dim).reshape(-1, f.dim)
    needs = {"st": ("st",), "cx": ("cx",), "sm": ("sm",), "dcx": ("dcx",),
             "icx": ("cx", "st"), "idcx": ("dcx", "st"), "ism": ("sm", "st")}[tag]
    g = f.grad(pts)
    H = f.hess(pts)
    d = f.dim
    off = ~np.eye(d, dtype=bool)
    for need in needs:
        if need == "st" and np.any(g < -tol):
            return False
        if need == "cx" and np.any(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2))) < -tol):
            return False
        if need in ("sm", "dcx") and d > 1 and np.any(H[:, off] < -tol):
            return False
        if need == "dcx" and np.any(np.diagonal(H, axis1=-2, axis2=-1) < -tol):
            return False
    return True


def psd_order(A, B, eps: float = EPS_PSD) -> bool:
    """``A ≤_psd B``: smallest eigenvalue of ``B - A`` is at least ``-eps``."""
    D = np.atleast_2d(np.asarray(B, dtype=float)) - np.atleast_2d(np.asarray(A, dtype=float))
    scale = max(1.0, np.abs(D).max())
    if not np.allclose(D, D.T, rtol=0, atol=1e3 * eps * scale):
        raise ValueError("psd_order needs symmetric matrices")
    return bool(np.linalg.eigvalsh(0.5 * (D + D.T)).min() >= -eps)


def d_order(sigma1, sigma2, eps: float = EPS_PSD) -> bool:
    """Entrywise ``σ¹ ≤ σ²`` with equal diagonals."""
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    s2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    D = s2 - s1
    return bool(np.all(D >= -eps) and np.all(np.abs(np.diag(D)) <= eps))


@dataclass(frozen=True)
class OrderVerdict:
    satisfied: bool
    worst_margin: float
    witness: int
    margins: tuple = ()

    def to_dict(self):
        return {"satisfied": self.satisfied, "worst_margin": self.worst_margin,
                "witness": self.witness, "margins": list(self.margins)}


def levy_order(F1: LevyMeasure, F2: LevyMeasure, family, tol: float = ORDER_TOL) -> OrderVerdict:
    """``∫ f dF¹ <= ∫ f dF²`` over the finite family, members shifted to ``f(0) = 0``."""
    margins = []
    for f in family:
        g = f.shifted()
        margins.append(F2.integrate(g.value) - F1.integrate(g.value))
    margins = np.asarray(margins)
    if not np.all(np.isfinite(margins)):
        raise FloatingPointError("non-finite jump integral in levy_order")
    w = int(np.argmin(margins))
    return OrderVerdict(bool(margins[w] >= -tol), float(margins[w]), w, tuple(float(m) for m in margins))


def measures_equal(F1: LevyMeasure, F2: LevyMeasure, eps: float = 1e-12) -> bool:
    """Atom sets equal within ``eps``; continuous parts agree on the quadrature nodes."""
    def atoms(F):
        order = np.lexsort(F.locations.T[::-1]) if len(F.masses) else np.arange(0)
        return F.locations[order], F.masses[order]

    l1, m1 = atoms(F1)
    l2, m2 = atoms(F2)
    if l1.shape != l2.shape or not (np.allclose(l1, l2, atol=eps, rtol=0) and np.allclose(m1, m2, atol=eps, rtol=0)):
        return False
    c1, c2 = F1.continuous, F2.continuous
    if c1 is None or c2 is None:
        return c1 is None and c2 is None
    if c1.nodes.shape != c2.nodes.shape or not np.allclose(c1.nodes, c2.nodes, atol=eps, rtol=0):
        return False
    d1, d2 = c1.density_at_nodes(), c2.density_at_nodes()
    return bool(np.allclose(d1, d2, rtol=1e-12, atol=eps))


# ---------------------------------------------------------------------------
# sufficient conditions


@dataclass
class ConditionReport:
    tag: str
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows)

    def add(self, name, passed, s=None, detail="", margin=None):
        self.rows.append({"condition": name, "passed": bool(passed),
                          "s": None if s is None else float(s), "detail": detail,
                          "margin": None if margin is None else float(margin)})

    def to_dict(self):
        return {"tag": self.tag, "passed": self.passed, "rows": self.rows, "notes": self.notes}


SUFFICIENT_ROWS = {
    # tag: (drift relation, diffusion relation, jump relation)
    "st": ("le", "eq", "eq"),
    "cx": ("eq", "psd", "cx"),
    "sm": ("eq", "d", "sm"),
    "ism": ("le", "d", "sm"),
}


def sufficient_conditions(specA: ProcessSpec, specB: ProcessSpec, tag: str, s_grid,
                          family=None, family_size: int = 20, family_seed: int = 0,
                          x_grid=None, eps: float = EPS_PSD) -> ConditionReport:
    """Check the characteristic-level sufficient conditions for ``A ≤_tag B``.

    Drifts are compared in identity-cutoff form so that two specs using the
    truncation cut-off with different jump measures are compared consistently.
    For the diffusion variant the driver rows are checked, together with
    nonnegativity of both coefficients and ``Φ¹ ≤_psd Φ²`` on an ``(x, t)`` grid.
    """
    if specA.variant != specB.variant:
        raise ValueError("cannot compare a PII with a Lévy-driven diffusion")
    if specA.dim != specB.dim:
        raise ValueError("specs differ in dimension")
    if tag not in SUFFICIENT_ROWS:
        raise ValueError(f"no sufficient-condition row for {tag!r}")
    drift_rel, diff_rel, jump_rel = SUFFICIENT_ROWS[tag]
    d = specA.dim
    rep = ConditionReport(tag)
    if family is None and jump_rel in ("cx", "sm"):
        family = make_test_family(jump_rel, d, family_size, family_seed)
    if d > 1 and jump_rel != "eq":
        rep.notes.append("heuristic: jump row applied verbatim for d > 1")
    sa, sb = specA.schedule, specB.schedule
    times = np.atleast_1d(np.asarray(s_grid, dtype=float))
    for s in times:
        ba, bb = sa.identity_drift(s), sb.identity_drift(s)
        if drift_rel == "le":
            rep.add("drift b1 <= b2", np.all(ba <= bb + eps), s, margin=float(np.min(bb - ba)))
        else:
            rep.add("drift b1 = b2", np.allclose(ba, bb, atol=eps, rtol=0), s,
                    margin=-float(np.max(np.abs(bb - ba))))
        ta, tb = sa.triplet(s), sb.triplet(s)
        if diff_rel == "eq":
            rep.add("sigma1 = sigma2", np.allclose(ta.sigma, tb.sigma, atol=eps, rtol=0), s)
        elif diff_rel == "psd":
            lam = float(np.linalg.eigvalsh(0.5 * ((tb.sigma - ta.sigma) + (tb.sigma - ta.sigma).T)).min())
            rep.add("sigma1 <=_psd sigma2", psd_order(ta.sigma, tb.sigma, eps), s, margin=lam)
        else:
            rep.add("sigma1 <=_d sigma2", d_order(ta.sigma, tb.sigma, eps), s)
        if jump_rel == "eq":
            rep.add("F1 = F2", measures_equal(ta.F, tb.F), s)
        else:
            v = levy_order(ta.F, tb.F, family)
            rep.add(f"F1 <=_{jump_rel} F2", v.satisfied, s,
                    detail=f"witness member {v.witness}", margin=v.worst_margin)
    if specA.variant == "levy_sde":
        from .specs import validation_x_grid
        xs = validation_x_grid(d) if x_grid is None else as_points(x_grid, d).reshape(-1, d)
        ok_psd, ok_nonneg, worst = True, True, np.inf
        for t in times:
            P1, P2 = specA.phi(xs, t), specB.phi(xs, t)
            ok_nonneg &= bool(np.all(P1 >= -eps) and np.all(P2 >= -eps))
            D = P2 - P1
            D = 0.5 * (D + np.swapaxes(D, -1, -2))
            lam = float(np.linalg.eigvalsh(D).min())
            worst = min(worst, lam)
            ok_psd &= lam >= -eps
        rep.add("phi nonnegative", ok_nonneg)
        rep.add("phi1 <=_psd phi2", ok_psd, margin=worst)
    return rep
