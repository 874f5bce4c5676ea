import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levycomp.generator import TestFunction, constant_function
from levycomp.montecarlo import (BLOCK, EstimateCI, PathSet, estimate_expectation,
                                 estimate_from_values, poisson_from_uniform, sample_pii_increment,
                                 simulate, simulate_pii, simulate_sde, substream, symbol_estimate)
from levycomp.orders import exact_hinge, square
from levycomp.specs import (DiffusionCoefficient, LevyMeasure, ProcessSpec, TimeGrid,
                            TripletSchedule)

from conftest import brownian


def within(est, target, k=4.0, slack=0.0):
    return abs(est.mean - target) <= k * est.stderr + slack


def test_linear_drift_is_integrated_exactly():
    sched = TripletSchedule(lambda s: s, lambda s: 0.0, lambda s: LevyMeasure.zero(), horizon=2.0)
    paths = simulate_pii(sched, TimeGrid.uniform(2.0, 1), 3, seed=0, steps_per_unit=7)
    assert paths.terminal()[:, 0] == pytest.approx(2.0, abs=1e-13)
    rng = np.random.default_rng(0)
    total = sum(sample_pii_increment(sched, a, a + 0.25, rng)[0] for a in np.arange(0, 2, 0.25))
    assert total == pytest.approx(2.0, abs=1e-14)


def test_brownian_increment_moments():
    inc = sample_pii_increment(brownian(1.0), 0.3, 0.8, np.random.default_rng(1), size=10**5)[:, 0]
    mean = estimate_from_values(inc)
    var = estimate_from_values((inc - 0.0) ** 2)
    assert within(mean, 0.0)
    assert within(var, 0.5)


def test_gaussian_increment_covariance_2d():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    b = np.array([0.5, -1.0])
    inc = sample_pii_increment(brownian(cov, b, dim=2), 0.0, 1.0, np.random.default_rng(2), size=10**5)
    for j in range(2):
        assert within(estimate_from_values(inc[:, j]), b[j])
    c = inc - b
    for i in range(2):
        for j in range(2):
            assert within(estimate_from_values(c[:, i] * c[:, j]), cov[i, j])


def test_poisson_jump_count():
    sched = TripletSchedule.constant(0.0, 0.0, LevyMeasure.atoms([1.0], [1.0]))
    counts = sample_pii_increment(sched, 0.0, 1.0, np.random.default_rng(3), size=10**5)[:, 0]
    assert np.all(counts == np.round(counts)) and counts.min() >= 0
    assert within(estimate_from_values(counts), 1.0)
    assert within(estimate_from_values((counts - 1.0) ** 2), 1.0)


@given(st.floats(0.01, 30))
def test_poisson_inverse_cdf_is_monotone(mu):
    u = np.linspace(0, 1, 513, endpoint=False)
    k = poisson_from_uniform(u, mu)
    assert np.all(np.diff(k) >= 0)
    assert k[0] == 0


def test_deterministic_schedule_gives_identical_paths():
    sched = TripletSchedule(lambda s: np.sin(s), lambda s: 0.0, lambda s: LevyMeasure.zero())
    paths = simulate_pii(sched, TimeGrid.uniform(1.0, 4), 100, seed=5)
    assert np.all(paths.states == paths.states[:1])
    assert np.all(paths.states[:, 0] == 0.0)


def test_brownian_terminal_variance_at_one_million_paths():
    paths = simulate_pii(brownian(1.0), TimeGrid.uniform(1.0, 1), 10**6, seed=11, steps_per_unit=4)
    x = paths.terminal()[:, 0]
    assert 0.99 <= np.var(x) <= 1.01


def test_thread_count_does_not_change_paths():
    sched = brownian(1.0, 0.1, LevyMeasure.atoms([-1.0, 0.5], [0.7, 1.3]))
    grid = TimeGrid.uniform(1.0, 2)
    n = 2 * BLOCK + 123
    a = simulate_pii(sched, grid, n, seed=9, steps_per_unit=8, threads=1)
    b = simulate_pii(sched, grid, n, seed=9, steps_per_unit=8, threads=4)
    assert np.array_equal(a.states, b.states)
    c = simulate_pii(sched, grid, n, seed=10, steps_per_unit=8)
    assert not np.array_equal(a.states, c.states)


def test_common_random_numbers_pair_paths():
    grid = TimeGrid.uniform(1.0, 1)
    a = simulate_pii(brownian(1.0), grid, 1000, seed=4, steps_per_unit=16)
    b = simulate_pii(brownian(4.0), grid, 1000, seed=4, steps_per_unit=16)
    np.testing.assert_allclose(b.states, 2.0 * a.states, rtol=1e-14, atol=0)


def test_sde_zero_coefficient_stays_put():
    drv = brownian(1.0, 1.0, LevyMeasure.atoms([1.0], [2.0]))
    paths = simulate_sde(DiffusionCoefficient.constant(0.0), drv, 1.5, TimeGrid.uniform(1.0, 2),
                         500, seed=0, steps_per_unit=16)
    assert np.all(paths.states == 1.5)


def test_sde_identity_coefficient_is_shifted_brownian():
    paths = simulate_sde(DiffusionCoefficient.constant(1.0), brownian(1.0), 0.7,
                         TimeGrid.uniform(1.0, 1), 2 * 10**5, seed=1, steps_per_unit=8)
    x = paths.terminal()[:, 0]
    assert within(estimate_from_values(x), 0.7)
    assert within(estimate_from_values((x - 0.7) ** 2), 1.0)


def test_sde_time_dependent_coefficient_variance():
    spu = 64
    phi = DiffusionCoefficient(lambda x, t: np.full(x.shape[:-1] + (1, 1), 1.0 + t), 1, 2.0)
    paths = simulate_sde(phi, brownian(1.0), 0.0, TimeGrid.uniform(1.0, 1), 2 * 10**5, seed=2,
                         steps_per_unit=spu)
    x = paths.terminal()[:, 0]
    est = estimate_from_values(x**2)
    left = np.arange(spu) / spu
    riemann = float(np.sum((1 + left) ** 2) / spu)
    assert within(est, riemann)
    # left-endpoint bias of the Euler sum against ∫_0^1 (1+u)² du = 7/3
    assert within(est, 7 / 3, slack=2.0 / spu)


def test_blow_up_is_counted():
    phi = DiffusionCoefficient(lambda x, t: np.full(x.shape[:-1] + (1, 1), 3.0), 1, 3.0)
    paths = simulate_sde(phi, brownian(0.0, 1.0), 0.0, TimeGrid.uniform(1.0, 1), 10, seed=0,
                         steps_per_unit=4, blowup_bound=1.0)
    assert paths.meta["blown_up_paths"] == 10


def test_constant_function_estimate_is_exact():
    states = np.random.default_rng(0).normal(size=(1000, 1))
    est = estimate_expectation(states, constant_function(2.5))
    assert (est.mean, est.stderr) == (2.5, 0.0)


@pytest.mark.parametrize("f,target", [(exact_hinge(), 1 / math.sqrt(2 * math.pi)), (square(), 1.0)],
                         ids=["hinge", "square"])
def test_gaussian_expectation_oracles(f, target):
    paths = simulate_pii(brownian(1.0), TimeGrid.uniform(1.0, 1), 10**6, seed=3, steps_per_unit=4)
    assert within(estimate_expectation(paths.terminal(), f), target)


def test_non_finite_values_name_the_state():
    states = np.array([[0.0], [1.0], [-2.0]])
    log_abs = TestFunction(lambda x: np.log(np.abs(x[..., 0])), lambda x: 1 / x,
                           lambda x: -1 / x[..., None] ** 2)
    with np.errstate(divide="ignore"), pytest.raises(ValueError, match=r"\[0\.0\]"):
        estimate_expectation(states, log_abs)


def test_estimate_interval():
    e = EstimateCI(1.0, 0.1, 100, 0.95)
    lo, hi = e.interval
    assert hi - 1.0 == pytest.approx(1.959963984540054 * 0.1)
    assert 1.0 - lo == pytest.approx(hi - 1.0)


def test_symbol_of_brownian():
    re, im = symbol_estimate(ProcessSpec(brownian(1.0), DiffusionCoefficient.constant(1.0)),
                             0.0, 0.0, 1.0, h=1e-3, n_paths=10**6, seed=0)
    assert within(re, 0.5, slack=0.01)
    assert within(im, 0.0, slack=0.01)


def test_symbol_at_zero_frequency_is_exactly_zero():
    spec = ProcessSpec(brownian(1.0, 0.3, LevyMeasure.atoms([1.0], [1.0])), DiffusionCoefficient.constant(1.0))
    re, im = symbol_estimate(spec, 0.2, 0.4, 0.0, n_paths=1000)
    assert (re.mean, re.stderr, im.mean, im.stderr) == (0.0, 0.0, 0.0, 0.0)


def test_symbol_of_pure_drift():
    spec = ProcessSpec(brownian(0.0, 1.0), DiffusionCoefficient.constant(1.0))
    re, im = symbol_estimate(spec, 0.0, 0.0, 1.0, h=1e-3, n_paths=100)
    assert re.stderr == 0.0 and im.stderr == 0.0
    assert re.mean == pytest.approx(0.0, abs=1e-3)
    assert im.mean == pytest.approx(-1.0, abs=1e-3)
    re, im = symbol_estimate(spec, 0.0, 0.0, 1.0, h=1e-3, n_paths=100, richardson=True)
    assert im.mean == pytest.approx(-1.0, abs=1e-6)


def test_pathset_round_trip(tmp_path):
    paths = simulate_pii(brownian(1.0), TimeGrid.uniform(1.0, 4), 50, seed=8, steps_per_unit=8)
    paths.save(tmp_path / "run")
    back = PathSet.load(tmp_path / "run")
    assert np.array_equal(back.states, paths.states)
    assert back.seed == 8 and back.meta == paths.meta
    assert np.array_equal(back.at(0.5), paths.at(0.5))
    with pytest.raises(KeyError):
        paths.at(0.3)


def test_substreams_are_distinct_and_reproducible():
    a = substream(1, 0, 0, 0).random(4)
    assert np.array_equal(a, substream(1, 0, 0, 0).random(4))
    for other in [(2, 0, 0, 0), (1, 1, 0, 0), (1, 0, 1, 0), (1, 0, 0, 1)]:
        assert not np.array_equal(a, substream(*other).random(4))


def test_initial_law_is_first_column():
    spec = ProcessSpec(brownian(1.0), DiffusionCoefficient.constant(1.0), x0=-0.25)
    paths = simulate(spec, TimeGrid.uniform(1.0, 2), 20, seed=0, steps_per_unit=4)
    assert np.all(paths.states[:, 0, 0] == -0.25)
    assert np.all(np.isfinite(paths.states))
