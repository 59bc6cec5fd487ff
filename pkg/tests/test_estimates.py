import math

import numpy as np
import pytest

from jumpbsde import (TerminalCondition, TruncationSchedule, apriori_bounds, check_apriori,
                      difference_bound, difference_constant, driver_seminorm,
                      shifted_problem, solve_local, solve_picard, stability_experiment,
                      truncate_driver)
from jumpbsde import drivers
from jumpbsde.bsde import Driver
from jumpbsde.estimates import Perturbation, all_passed
from jumpbsde.markov import uniform_start_law

from conftest import lipschitz_fixtures


class TestAprioriBounds:
    def test_direct_evaluation(self):
        b = apriori_bounds(1.0, 1.0, 1.0)
        assert b.y_sq == pytest.approx(10.0 * math.exp(4.0), rel=1e-14)
        assert b.z_sq == pytest.approx(20.0 + 10.0 * b.y_sq, rel=1e-14)

    def test_horizon_collapse(self):
        b = apriori_bounds(2.5, 0.0, 1.5, terminal_sq_sup=4.0)
        assert b.y_sq == 1.5
        assert b.z_sq == 3.0
        assert b.y_sup_sq == 4.0

    def test_monotone_in_inputs(self):
        base = apriori_bounds(1.0, 1.0, 1.0)
        for kwargs in ({"growth_scale": 1.5}, {"horizon": 1.5}, {"terminal_sq_mean": 2.0}):
            args = {"growth_scale": 1.0, "horizon": 1.0, "terminal_sq_mean": 1.0}
            args.update(kwargs)
            bigger = apriori_bounds(**args)
            assert bigger.y_sq >= base.y_sq
            assert bigger.z_sq >= base.z_sq

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            apriori_bounds(-1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            apriori_bounds(1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            apriori_bounds(1.0, 1.0, -1.0)

    def test_bound_dominates_terminal_value(self):
        b = apriori_bounds(0.7, 0.8, 2.0)
        assert b.y_sq >= 2.0


class TestCheckApriori:
    def test_zero_problem_trivially_within_bounds(self, two_state):
        grid = two_state.grid(100)
        law = uniform_start_law(two_state, grid)
        h = TerminalCondition(np.zeros(2))
        u, _ = solve_picard(two_state, drivers.zero(), h, grid)
        checks = check_apriori(two_state, law, u,
                               apriori_bounds(1.0, 1.0, 0.0, terminal_sq_sup=0.0))
        assert all_passed(checks)
        assert all(c.measured_value == 0.0 for c in checks)

    def test_solved_fixtures_pass(self, two_state):
        grid = two_state.grid(400)
        law = uniform_start_law(two_state, grid)
        for name, drv, term in lipschitz_fixtures():
            h = TerminalCondition(term)
            u, _ = solve_picard(two_state, drv, h, grid, tol=1e-13)
            bounds = apriori_bounds(drv.growth_scale, two_state.horizon,
                                    h.mean_square(law), terminal_sq_sup=h.sup_square())
            checks = check_apriori(two_state, law, u, bounds)
            assert all_passed(checks), name
            assert len(checks) == 3


class TestSeminorm:
    def test_identical_drivers(self, two_state):
        law = uniform_start_law(two_state, two_state.grid(8))
        drv = drivers.osc_sqrtlog()
        assert driver_seminorm(two_state, law, drv, drv, 4.0) == 0.0

    def test_constant_gap_exact(self, two_state):
        law = uniform_start_law(two_state, two_state.grid(8))
        drv = drivers.osc_sqrtlog()
        value = driver_seminorm(two_state, law, drivers.shifted(drv, -0.25), drv, 4.0)
        assert value == pytest.approx(0.25 * math.sqrt(1.0), abs=1e-10)

    def test_truncation_gap_vanishes_inside_radius(self, two_state):
        law = uniform_start_law(two_state, two_state.grid(8))
        drv = drivers.osc_sqrtlog()
        for n in (2.0, 8.0, 32.0):
            fn = truncate_driver(drv, n)
            assert driver_seminorm(two_state, law, fn, drv, n) == 0.0

    def test_monotone_in_radius(self, two_state):
        law = uniform_start_law(two_state, two_state.grid(8))
        fn = truncate_driver(drivers.osc_sqrtlog(), 2.0)
        drv = drivers.osc_sqrtlog()
        values = [driver_seminorm(two_state, law, fn, drv, m)
                  for m in (2.0, 3.0, 4.0, 8.0, 16.0)]
        assert values[0] == 0.0
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[-1] > 0.0

    def test_absolute_homogeneity_for_scalings(self, two_state):
        law = uniform_start_law(two_state, two_state.grid(8))
        drv = drivers.osc_sqrtlog()
        zero = drivers.zero()
        base = driver_seminorm(two_state, law, drv, zero, 4.0)
        scaled = driver_seminorm(two_state, law, drivers.osc_sqrtlog(3.0), zero, 4.0)
        assert scaled == pytest.approx(3.0 * base, rel=1e-12)


class TestDifferenceBound:
    def test_identical_problems_floor_term(self):
        c = difference_constant(1.0, 0.5, 1.0, 1.0, 1.0)
        assert c > 0.0
        y1, _ = difference_bound(c, 0.0, 0.0, 0.0, 1.0, 4.0, 0.5, 1.0, 0.0)
        y2, _ = difference_bound(c, 0.0, 0.0, 0.0, 1.0, 1e6, 0.5, 1.0, 0.0)
        assert y1 > 0.0
        assert y2 < 1e-4 * y1          # floor vanishes as the radius grows

    def test_formula_at_terminal_time(self):
        c = 2.0
        y, zfn = difference_bound(c, 0.01, 0.0, 0.0, 1.0, 10.0, 0.5, 1.0, 1.0)
        assert y == pytest.approx(0.01 + c / (3.0 * 10.0), rel=1e-14)
        assert zfn(0.5) == pytest.approx(c * (0.01 + 0.5), rel=1e-14)

    def test_monotone_nonincreasing_in_radius(self):
        values = [difference_bound(1.0, 0.1, 0.2, 0.0, 1.5, m, 0.5, 1.0, 0.0)[0]
                  for m in (2.0, 4.0, 8.0, 16.0)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_radius_must_exceed_one(self):
        with pytest.raises(ValueError, match="radius"):
            difference_bound(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 1.0, 0.0)


@pytest.fixture(scope="module")
def stability_setup():
    from jumpbsde import MarkovModel
    model = MarkovModel(states=(0, 1), rate_matrix=[[0.0, 1.0], [1.0, 0.0]], horizon=0.5)
    drv = drivers.osc_sqrtlog(1.0)
    h = TerminalCondition(np.array([2.0, 1.8]))
    sched = TruncationSchedule(radii=(2.0, 4.0, 8.0, 16.0), delta=0.1125,
                               growth_exponent=0.5)
    return model, drv, h, sched


class TestStability:
    def test_zero_perturbations(self, stability_setup):
        model, drv, h, sched = stability_setup
        grid = model.grid(200)
        perts = [shifted_problem(drv, h, 0.0, label=f"zero{k}") for k in range(3)]
        report = stability_experiment(model, drv, h, grid, perts, tol=1e-3, schedule=sched)
        assert report.passed
        assert report.distances == [0.0, 0.0, 0.0]

    def test_shrinking_offsets(self, stability_setup):
        model, drv, h, sched = stability_setup
        grid = model.grid(200)
        perts = [shifted_problem(drv, h, 1.0 / n) for n in (1, 2, 4, 8)]
        report = stability_experiment(model, drv, h, grid, perts, tol=5e-2, schedule=sched)
        assert report.passed
        d = report.distances
        assert all(b < a for a, b in zip(d, d[1:]))
        assert all(r.dominated for r in report.runs)
        for run, n in zip(report.runs, (1, 2, 4, 8)):
            assert run.seminorm == pytest.approx(math.sqrt(0.5) / n, rel=1e-12)

    def test_growth_violation_is_rejected(self, stability_setup):
        model, drv, h, sched = stability_setup
        grid = model.grid(100)
        lying = Perturbation(
            driver=Driver(f=lambda t, x, y, z, zn: 10.0 + 0.0 * y,
                          growth_scale=1.0, growth_exponent=0.5,
                          lipschitz_profile=lambda m: 0.0, global_lipschitz=0.0),
            terminal=h, label="liar")
        with pytest.raises(ValueError, match="growth bound"):
            stability_experiment(model, drv, h, grid, [lying], tol=1e-3, schedule=sched)
