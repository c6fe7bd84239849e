import math

import numpy as np
import pytest

from smpsolver import (
    Empirical,
    Exponential,
    NumericalError,
    QuantityResult,
    SmpSolver,
    UndefinedQuantityError,
    validate,
)
from smpsolver import quantities as q_mod

from conftest import RATE, chain3, cycle2, two_state, weibull_cycle
from kao_reference import ABSORBING, PI, T_60_DAYS, TRANSIENT

TIMES = np.linspace(0.1, 6.0, 20)


class TestTwoStateClosedForms:
    @pytest.fixture(scope="class")
    @classmethod
    def solver(cls):
        return SmpSolver(two_state())

    def test_state_probabilities(self, solver):
        P = solver.state_probabilities(TIMES, "A").row()
        assert np.allclose(P[:, 0], np.exp(-RATE * TIMES), atol=1e-7, rtol=0)
        assert np.allclose(P[:, 1], 1 - np.exp(-RATE * TIMES), atol=1e-7, rtol=0)

    def test_absorbing_start(self, solver):
        P = solver.state_probabilities(TIMES, "B").row()
        assert np.allclose(P[:, 1], 1.0, atol=1e-7)
        occ = solver.expected_occupancy(TIMES).values[:, 1, 1]
        assert np.allclose(occ, TIMES, rtol=1e-7)
        v0 = solver.count_probability(0, TIMES).values[:, 1, 1]
        assert np.allclose(v0, 1.0, atol=1e-7)

    def test_occupancy(self, solver):
        occ = solver.expected_occupancy(TIMES).values[:, 0, 0]
        assert np.allclose(occ, (1 - np.exp(-RATE * TIMES)) / RATE, atol=1e-7, rtol=0)

    def test_first_passage(self, solver):
        G, g = solver.first_passage(TIMES)
        assert np.allclose(G.values[:, 0, 1], 1 - np.exp(-RATE * TIMES), atol=1e-7, rtol=0)
        assert np.allclose(g.values[:, 0, 1], RATE * np.exp(-RATE * TIMES), atol=1e-7, rtol=0)

    def test_first_passage_lt(self, solver):
        for s in (0.5, 2.0 + 3.0j):
            g = solver.first_passage_lt(s)
            assert g[0, 1] == pytest.approx(RATE / (RATE + s), abs=1e-14)
            assert g[1, 1] == 0 and g[0, 0] == 0
        with pytest.raises(ValueError):
            solver.first_passage_lt(0.0)

    def test_visits(self, solver):
        M = solver.expected_visits(TIMES).values[:, 0, 1]
        assert np.allclose(M, 1 - np.exp(-RATE * TIMES), atol=1e-7, rtol=0)
        v2 = solver.count_probability(2, TIMES).values[:, 0, 1]
        assert np.allclose(v2, 0.0, atol=1e-7)

    def test_hazard_is_constant(self, solver):
        # Relative accuracy is about 1e-8 / exp(-rate t); stay where that is below 1e-6.
        times = np.linspace(0.1, 4.0, 20)
        lam = solver.conditional_hazard("A", "B", times).series
        assert np.max(np.abs(lam - RATE)) < 1e-6

    def test_hazard_nan_once_mass_is_exhausted(self, solver):
        lam = solver.conditional_hazard("A", "B", [5.0, 30.0]).series
        assert np.isfinite(lam[0]) and np.isnan(lam[1])

    def test_undefined_hazard(self, solver):
        with pytest.raises(UndefinedQuantityError):
            solver.conditional_hazard("B", "A", TIMES)
        assert np.all(np.isnan(solver.hazard(TIMES).values[:, 1, 0]))


def test_hypoexponential_first_passage():
    r1, r2 = 1.5, 0.6
    G = SmpSolver(chain3(r1, r2)).first_passage(TIMES)[0].values[:, 0, 2]
    exact = 1 - (r2 * np.exp(-r1 * TIMES) - r1 * np.exp(-r2 * TIMES)) / (r2 - r1)
    assert np.max(np.abs(G - exact)) < 1e-7


def test_alternating_renewal_probabilities():
    lam, mu = 1.0, 2.0
    P = SmpSolver(cycle2(lam, mu)).state_probabilities(TIMES).values[:, 0, 0]
    exact = mu / (lam + mu) + lam / (lam + mu) * np.exp(-(lam + mu) * TIMES)
    assert np.max(np.abs(P - exact)) < 1e-7


class TestLimits:
    def test_exponential_cycle(self):
        lam, mu = 1.0, 2.0
        solver = SmpSolver(cycle2(lam, mu))
        assert np.allclose(solver.reach_probability().values, 1.0, atol=1e-6)
        pi = solver.asymptotic_probabilities()
        share = (1 / lam) / (1 / lam + 1 / mu)
        assert np.allclose(pi.values[:, 0], share, atol=1e-6)
        assert np.allclose(pi.values.sum(axis=1), 1.0, atol=1e-3)
        assert pi.warnings == []

    def test_weibull_cycle(self):
        model = weibull_cycle()
        pi = SmpSolver(model).asymptotic_probabilities()
        m_up, m_down = (d.mean() for d in (model.dists[0][1], model.dists[1][0]))
        assert np.allclose(pi.values[:, 0], m_up / (m_up + m_down), atol=1e-5)

    def test_mean_return_time(self):
        solver = SmpSolver(cycle2(1.0, 2.0))
        assert np.allclose(np.diag(solver.mean_return_times().values), 1.5, rtol=1e-5)

    def test_kao_reach(self, kao_solver):
        reach = kao_solver.reach_probability()
        cols = [kao_solver.model.index(s) for s in ABSORBING]
        rows = [kao_solver.model.index(s) for s in TRANSIENT]
        assert np.max(np.abs(reach.values[np.ix_(rows, cols)] - PI)) < 0.005
        assert np.allclose(reach.values[np.ix_(rows, cols)].sum(axis=1), 1.0, atol=1e-3)
        assert reach.warnings == []

    def test_kao_asymptotic(self, kao_solver):
        pi = kao_solver.asymptotic_probabilities()
        assert pi["SURG", "HOME"] == pytest.approx(1.0, abs=1e-6)
        assert np.allclose(pi.values[:, :6], 0.0)
        assert pi["CCU", "HOME"] == pytest.approx(0.7830, abs=0.005)

    def test_small_s_first_passage(self, kao_solver):
        g = kao_solver.first_passage_lt(1e-7)
        assert g[0, kao_solver.model.index("HOME")].real == pytest.approx(0.7830, abs=0.005)
        for j in ABSORBING:
            k = kao_solver.model.index(j)
            assert g[k, k] == 0

    def test_infinite_mean_rejected(self):
        class Heavy(Exponential):
            def mean(self):
                return math.inf

        m = validate(["a", "b"], [[0, 1], [0, 0]], [[None, Heavy(1.0)], [None, None]])
        with pytest.raises(UndefinedQuantityError):
            SmpSolver(m).asymptotic_probabilities()


class TestKaoAnchors:
    def test_large_t_probabilities(self, kao_solver):
        P = kao_solver.state_probabilities([20000.0], "CCU").row()[0]
        assert P[kao_solver.model.index("HOME")] == pytest.approx(0.7830, abs=0.005)

    def test_count_cdf(self, kao_solver):
        m = kao_solver.model
        V1 = kao_solver.count_cdf(1, [T_60_DAYS]).values[0]
        assert V1[m.index("CCU"), m.index("PCCU")] == pytest.approx(0.9824, abs=0.007)
        V0 = kao_solver.count_cdf(0, [T_60_DAYS]).values[0]
        assert V0[m.index("SURG"), m.index("HOME")] == pytest.approx(0.0, abs=0.005)
        V10 = kao_solver.count_cdf(10, [24.0, 500.0, T_60_DAYS]).values
        assert np.all(V10 >= 1 - 1e-4)

    def test_first_passage_complement(self, kao_solver):
        m = kao_solver.model
        G = kao_solver.first_passage([T_60_DAYS])[0].values[0]
        assert G[m.index("CCU"), m.index("HOME")] == pytest.approx(0.7809, abs=0.005)

    def test_hazard_nonnegative(self, kao_solver):
        times = np.linspace(24, 1440, 30)
        H = kao_solver.hazard(times).values
        cols = [kao_solver.model.index(s) for s in ABSORBING]
        vals = H[:, :6][:, :, cols]
        assert np.all(vals[np.isfinite(vals)] >= -1e-9)

    def test_hazard_matches_finite_differences(self, kao_solver):
        times = np.linspace(100, 1400, 14)
        h = 1.0
        res = kao_solver.conditional_hazard("CCU", "HOME", times)
        j = kao_solver.model.index("HOME")
        limit = kao_solver.reach_probability().values[0, j]
        G = lambda t: kao_solver.first_passage(t)[0].values[:, 0, j]
        fd = -(np.log(limit - G(times + h)) - np.log(limit - G(times - h))) / (2 * h)
        assert np.allclose(res.series, fd, rtol=1e-3)

    def test_occupancy_against_trapezoid(self, kao_solver):
        grid = np.linspace(12, 1440, 120)
        P = kao_solver.state_probabilities(grid, "CCU").row()[:, 0]
        area = np.trapezoid(np.concatenate([[1.0], P]), np.concatenate([[0.0], grid]))
        occ = kao_solver.expected_occupancy([1440.0], "CCU").row()[0, 0]
        assert abs(occ - area) < 1e-3 * 1440

    def test_conditional_hazard_undefined(self, kao_solver):
        with pytest.raises(UndefinedQuantityError):
            kao_solver.conditional_hazard("SURG", "DIED", [100.0])


class TestResultObject:
    def test_out_of_range_probability_is_an_error(self):
        with pytest.raises(NumericalError):
            QuantityResult("P", [1.0], [[[1.001]]], ("a",))

    def test_small_excursions_kept_but_presented_clamped(self):
        r = QuantityResult("P", [1.0], [[[-3e-8, 1 + 3e-8]]], ("a", "b"))
        assert r.values[0, 0, 0] < 0
        assert r.presented()[0, 0].tolist() == [0.0, 1.0]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            QuantityResult("X", [1.0], [[[0.0]]], ("a",))

    def test_bad_k(self):
        with pytest.raises(ValueError):
            SmpSolver(two_state()).count_probability(-1, [1.0])
        with pytest.raises(ValueError):
            SmpSolver(two_state()).count_cdf(1.5, [1.0])

    def test_functional_wrappers(self):
        m = two_state()
        P = q_mod.state_probabilities(m, [1.0]).values[0]
        assert P[0, 0] == pytest.approx(math.exp(-RATE), abs=1e-7)
        assert q_mod.expected_visits(m, [1.0]).values[0, 0, 1] == pytest.approx(1 - math.exp(-RATE), abs=1e-7)
        assert q_mod.reach_probability(m).values[0, 1] == pytest.approx(1.0, abs=1e-6)


def test_empirical_results_are_flagged():
    m = validate(["a", "b"], [[0, 1], [0, 0]], [[None, Empirical([1.0, 2.0, 4.0])], [None, None]])
    res = SmpSolver(m).state_probabilities([3.0])
    assert res.accuracy_guaranteed is False
    assert SmpSolver(two_state()).state_probabilities([3.0]).accuracy_guaranteed is True


def test_parallel_matches_serial(kao):
    times = np.linspace(50, 1440, 8)
    serial = SmpSolver(kao, workers=1).state_probabilities(times).values
    parallel = SmpSolver(kao, workers=4).state_probabilities(times).values
    assert np.array_equal(serial, parallel)
