import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levycomp.generator import constant_function, gaussian_bump, generator_difference
from levycomp.montecarlo import EstimateCI
from levycomp.orders import (TestFamily, exact_hinge, hinge, make_test_family, ramp, square,
                             sufficient_conditions)
from levycomp.specs import LevyMeasure, ProcessSpec, TripletSchedule
from levycomp.spectral import BoundaryMassWarning, spectral_grid
from levycomp.verify import (FiniteMeasure, backward_equation_residual, check_generator_dominance,
                             forward_equation_residual, kernel_condition_K, mc_verdict,
                             modified_lp_norm, monotonicity_probe, representation_residual,
                             verify_order_mc, verify_order_spectral)

from conftest import brownian, symmetric_atoms

S_GRID = [0.0, 0.5, 1.0]
X_GRID = np.linspace(-5, 5, 41)


def family(*members, tag="cx"):
    return TestFamily(tag, tuple(members), 0)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMassWarning)
        return fn(*args, **kw)


def test_dominance_brownian_pair():
    fam = make_test_family("cx", 1, 20, 0)
    rep = check_generator_dominance(ProcessSpec(brownian(1.0)), ProcessSpec(brownian(2.0)), fam, S_GRID, X_GRID)
    assert rep.passed and rep.checked == 3 * 20 * 41
    assert rep.min_margin >= 0


def test_dominance_identical_specs():
    spec = ProcessSpec(brownian(1.0, 0.5, symmetric_atoms(1.0)))
    rep = check_generator_dominance(spec, spec, make_test_family("cx", 1, 10, 2), S_GRID, X_GRID)
    assert rep.passed and rep.min_margin == 0.0


def test_dominance_reversed_pair_flags_every_point():
    rep = check_generator_dominance(ProcessSpec(brownian(2.0)), ProcessSpec(brownian(1.0)),
                                    family(square()), S_GRID, X_GRID)
    assert len(rep.violations) == rep.checked
    assert all(m == pytest.approx(-1.0) for _, _, _, m in rep.violations)
    assert rep.min_margin == pytest.approx(-1.0)


@given(st.floats(-1, 1), st.floats(0, 1))
def test_violations_are_exactly_the_points_below_tolerance(tol_shift, s):
    a = ProcessSpec(brownian(1.0, 0.0, symmetric_atoms(1.0)))
    b = ProcessSpec(brownian(1.0 + tol_shift, 0.0, symmetric_atoms(1.0)))
    fam = make_test_family("cx", 1, 5, 3)
    rep = check_generator_dominance(a, b, fam, [s], X_GRID, tol=1e-9)
    expected = sum(int(np.sum(generator_difference(a, b, s, f, X_GRID) < -1e-9)) for f in fam)
    assert len(rep.violations) == expected


def test_mc_verdict_policy():
    assert mc_verdict(EstimateCI(-1.0, 0.1, 100)) == "violated"
    assert mc_verdict(EstimateCI(0.5, 0.1, 100)) == "supported"
    assert mc_verdict(EstimateCI(0.0, 0.0, 100)) == "supported"
    assert mc_verdict(EstimateCI(-0.01, 0.01, 100)) == "inconclusive"


def test_mc_hinge_oracles():
    rep = verify_order_mc(ProcessSpec(brownian(1.0)), ProcessSpec(brownian(4.0)), family(exact_hinge()),
                          1.0, 10**6, seed=1, steps_per_unit=4)
    (m,) = rep.members
    assert m.verdict == "supported" and rep.overall == "supported"
    assert abs(m.lhs.mean - 1 / math.sqrt(2 * math.pi)) <= 4 * m.lhs.stderr
    assert abs(m.rhs.mean - 2 / math.sqrt(2 * math.pi)) <= 4 * m.rhs.stderr


def test_mc_identical_specs_pair_exactly():
    spec = ProcessSpec(brownian(1.0, 0.2, symmetric_atoms(0.5)))
    rep = verify_order_mc(spec, spec, make_test_family("cx", 1, 6, 0), 1.0, 5000, seed=2, steps_per_unit=8)
    assert rep.overall == "supported"
    assert all(m.paired_diff.mean == 0.0 and m.paired_diff.stderr == 0.0 for m in rep.members)


def test_mc_compound_poisson_pair():
    a = ProcessSpec(brownian(0.0, 0.0, symmetric_atoms(0.5)))
    b = ProcessSpec(brownian(0.0, 0.0, symmetric_atoms(1.0)))
    rep = verify_order_mc(a, b, make_test_family("cx", 1, 20, 0), 1.0, 2 * 10**5, seed=3, steps_per_unit=8)
    assert rep.overall == "supported"


def test_mc_requires_same_initial_law():
    a = ProcessSpec(brownian(), x0=0.0)
    b = ProcessSpec(brownian(), x0=1.0)
    with pytest.raises(ValueError):
        verify_order_mc(a, b, family(square()), 1.0, 10, 0)


def test_order_report_csv(tmp_path):
    rep = verify_order_mc(ProcessSpec(brownian(1.0)), ProcessSpec(brownian(2.0)),
                          make_test_family("cx", 1, 3, 0), 1.0, 1000, seed=0, steps_per_unit=4)
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["member", "verdict", "margin", "ci_low", "ci_high"]
    assert len(rows) == 4
    for r in rows[1:]:
        assert float(r[3]) <= float(r[2]) <= float(r[4])


def test_spectral_brownian_pair_supported():
    rep = quiet(verify_order_spectral, brownian(1.0), brownian(2.0), make_test_family("cx", 1, 10, 0), 0.0, 1.0)
    assert rep.overall == "supported"
    assert all(m.margin > -1e-7 for m in rep.members)


def test_spectral_identical_schedules_have_zero_margins():
    sched = brownian(1.0, 0.3, symmetric_atoms(1.0))
    fam = family(gaussian_bump(1.0), gaussian_bump(0.5, 1.0))
    rep = verify_order_spectral(sched, sched, fam, 0.0, 1.0)
    assert all(m.margin == 0.0 for m in rep.members)


def test_spectral_reversed_pair_violated_with_witness():
    with pytest.warns(BoundaryMassWarning):
        rep = verify_order_spectral(brownian(2.0), brownian(1.0), family(square(), hinge(1.0)), 0.0, 1.0)
    assert rep.overall == "violated"
    sq = rep.members[0]
    assert sq.margin == pytest.approx(-1.0, abs=1e-6)
    assert sq.witness_x is not None
    assert rep.notes


def test_representation_residual_identical_is_zero():
    sched = brownian(1.0, 0.5, symmetric_atoms(1.0))
    assert representation_residual(sched, sched, gaussian_bump(1.0), 0.0, 1.0) <= 1e-10


def test_representation_residual_brownian_hinge():
    r = representation_residual(brownian(1.0), brownian(2.0), hinge(1.0), 0.0, 1.0, r_nodes=32)
    assert r <= 1e-4


def test_representation_residual_jump_pair_shrinks_with_nodes():
    a, b = brownian(1.0), brownian(1.0, 0.0, LevyMeasure.atoms([1.0], [1.0]))
    grid = spectral_grid(b, 0.0, 1.0, n=8192)
    r = [representation_residual(a, b, gaussian_bump(1.0), 0.0, 1.0, n, grid) for n in (8, 16, 32)]
    assert r[2] <= 1e-4
    assert r[0] > r[1] > r[2]


def test_representation_residual_time_dependent_schedules():
    a = TripletSchedule(lambda s: s, lambda s: 1 + s, lambda s: LevyMeasure.zero())
    b = TripletSchedule(lambda s: s, lambda s: 1 + 2 * s, lambda s: symmetric_atoms(s))
    r32 = representation_residual(a, b, gaussian_bump(1.0), 0.2, 0.9, 32)
    r64 = representation_residual(a, b, gaussian_bump(1.0), 0.2, 0.9, 64)
    assert r32 <= 1e-4 and r64 <= 1.1 * r32


def test_forward_and_backward_residuals_brownian():
    f = gaussian_bump(1.0)
    sched = brownian(1.0)
    for fn in (forward_equation_residual, backward_equation_residual):
        r1 = fn(sched, f, 0.0, 1.0, 1e-4)
        r2 = fn(sched, f, 0.0, 1.0, 5e-5)
        assert r1 <= 1e-2
        assert r2 < r1
        assert 1.6 <= r1 / r2 <= 2.4


def test_equation_residuals_vanish_on_constants():
    one = constant_function(1.0)
    sched = brownian(1.0, 0.4, symmetric_atoms(1.0))
    assert forward_equation_residual(sched, one, 0.0, 1.0, 1e-3) <= 1e-12
    assert backward_equation_residual(sched, one, 0.0, 1.0, 1e-3) <= 1e-12


def test_monotonicity_probe_examples():
    sched = brownian(1.0)
    assert all(monotonicity_probe(sched, family(hinge(1.0)), 0.0, 1.0).values())
    const = family(constant_function(2.0))
    for tag in ("st", "cx", "sm", "icx"):
        assert all(monotonicity_probe(sched, const, 0.0, 1.0, tag=tag).values())
    jumpy = brownian(0.5, -0.3, LevyMeasure.atoms([-1.0, 2.0], [1.0, 0.5]))
    assert all(monotonicity_probe(jumpy, family(ramp(0.3), ramp(-1.0, 1.2), tag="st"), 0.0, 1.0).values())
    assert all(monotonicity_probe(jumpy, make_test_family("cx", 1, 8, 0), 0.0, 1.0).values())


def test_modified_norm_trivial_cases():
    nu = FiniteMeasure.uniform()
    ys = np.linspace(-10, 10, 41)
    assert modified_lp_norm(lambda x: np.zeros_like(x), nu, 2, 2, ys) == 0.0
    for p, rho in [(1, 0.5), (2, 2), (3.5, 1)]:
        assert modified_lp_norm(lambda x: np.ones_like(x), nu, p, rho, ys) == 1.0
    with pytest.raises(ValueError):
        modified_lp_norm(lambda x: x, nu, 0.5, 1, ys)


def test_modified_norm_of_identity_approaches_one():
    nu = FiniteMeasure.uniform(0.0, 1.0)
    ident = lambda x: x
    small = modified_lp_norm(ident, nu, 2, 2, np.linspace(-10, 10, 201))
    big = modified_lp_norm(ident, nu, 2, 2, np.linspace(-100, 100, 2001))
    assert small <= big < 1.0
    assert big > 0.99
    # closed form at y = 100
    assert big == pytest.approx(math.sqrt(100**2 + 100 + 1 / 3) / 101, rel=1e-12)


@given(st.floats(0.1, 5), st.floats(1, 4))
def test_modified_norm_with_rho_zero_dominates_plain_norm(scale, p):
    nu = FiniteMeasure.gaussian(0.0, 1.0)
    f = lambda x: np.exp(-x**2 / scale)
    ys = np.linspace(-3, 3, 13)
    plain = math.fsum(nu.weights * np.abs(f(nu.points[:, 0])) ** p) ** (1 / p)
    assert modified_lp_norm(f, nu, p, 0.0, ys) >= plain


def test_kernel_condition_examples():
    nu = FiniteMeasure.gaussian(0.0, 1.0)
    ys = np.linspace(-5, 5, 21)
    assert kernel_condition_K(lambda s, t, y, x: np.zeros_like(x), nu, 0, 1, ys) == 0.0
    assert kernel_condition_K(lambda s, t, y, x: np.ones_like(x), nu, 0, 1, ys) == pytest.approx(1.0, abs=1e-14)
    phi = lambda z: np.exp(-z**2 / 2) / math.sqrt(2 * math.pi)
    K = kernel_condition_K(lambda s, t, y, x: phi(x - y), nu, 0, 1, ys)
    assert K == pytest.approx(math.sqrt(1 / (2 * math.pi * math.sqrt(3))), abs=1e-8)


@pytest.mark.parametrize("pair", ["brownian", "jumps"])
def test_soundness_chain(pair):
    if pair == "brownian":
        a, b = ProcessSpec(brownian(1.0)), ProcessSpec(brownian(2.0))
    else:
        a = ProcessSpec(brownian(0.5, 0.0, symmetric_atoms(0.5)))
        b = ProcessSpec(brownian(0.5, 0.0, symmetric_atoms(1.0)))
    fam = make_test_family("cx", 1, 12, 5)
    assert sufficient_conditions(a, b, "cx", S_GRID, fam).passed
    assert check_generator_dominance(a, b, fam, S_GRID, X_GRID).passed
    rep = verify_order_mc(a, b, fam, 1.0, 10**5, seed=4, steps_per_unit=8)
    assert rep.overall != "violated"
    spec_rep = quiet(verify_order_spectral, a.schedule, b.schedule, fam, 0.0, 1.0)
    assert spec_rep.overall == "supported"
