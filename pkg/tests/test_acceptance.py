"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s`` to see them inline)."""

import json
import math

import numpy as np
import pytest

from jumpbsde import (MarkovModel, TerminalCondition, TruncationSchedule, apriori_bounds,
                      check_apriori, price_claim, solve_direct, solve_local, solve_picard,
                      truncate_driver, verify_pathwise)
from jumpbsde import MarketSpec, driver_seminorm, feasibility_check, shifted_problem
from jumpbsde import drivers
from jumpbsde.bsde import growth_margin, sample_z_field
from jumpbsde.cli import main
from jumpbsde.estimates import all_passed, stability_experiment
from jumpbsde.markov import uniform_start_law
from jumpbsde.truncation import lipschitz_profile_check

from conftest import linear_closed_form, lipschitz_fixtures


def report(number, name, passed):
    print(f"ACCEPTANCE {number} {name}: {'PASS' if passed else 'FAIL'}")


@pytest.fixture(scope="module")
def osc():
    return drivers.osc_sqrtlog(1.0)


@pytest.fixture(scope="module")
def cascade_run(two_state, osc):
    """Criterion-4 cascade at full resolution, shared with criterion 5."""
    grid = two_state.grid(2000)
    h = TerminalCondition(np.array([3.0, 0.0]))
    schedule = TruncationSchedule(radii=(2, 4, 8, 16, 32, 64),
                                  delta=0.9 * (1.0 - 0.5) / 4.0, growth_exponent=0.5)
    field, diag = solve_local(two_state, osc, h, grid, schedule, tol=1e-8)
    return grid, h, field, diag


def test_criterion_1_oracle_equivalence(two_state, indicator_terminal):
    grid = two_state.grid(2000)
    a, c = -0.5, 0.2
    drv = drivers.linear(a, c)
    u_picard, diag = solve_picard(two_state, drv, indicator_terminal, grid, tol=1e-14)
    u_direct = solve_direct(two_state, drv, indicator_terminal, grid)
    closed = linear_closed_form(two_state, a, c, indicator_terminal, grid)
    gap_direct = float(np.max(np.abs(u_picard.values - u_direct.values)))
    gap_closed = float(np.max(np.abs(u_picard.values - closed)))
    passed = diag.converged and gap_direct <= 1e-6 and gap_closed <= 1e-6
    report(1, "oracle equivalence", passed)
    assert diag.converged
    assert gap_direct <= 1e-6
    assert gap_closed <= 1e-6


def test_criterion_2_contraction(two_state_half):
    failures = []
    for name, drv, term in lipschitz_fixtures():
        _, diag = solve_picard(two_state_half, drv, TerminalCondition(term),
                               two_state_half.grid(500), tol=1e-14)
        if not diag.converged or any(r > 0.9 for r in diag.contraction_ratios[1:]):
            failures.append((name, diag.contraction_ratios))
    report(2, "short-horizon contraction", not failures)
    assert not failures, failures


def test_criterion_3_truncation_properties(two_state, osc):
    radii = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    rng = np.random.default_rng(314)
    law = uniform_start_law(two_state, two_state.grid(8))
    exact_on_ball = True
    seminorm_zero = True
    growth_ok = True
    for n in radii:
        clamped = truncate_driver(osc, n)
        for _ in range(10_000 // len(radii)):
            t = rng.uniform(0.0, 1.0)
            x = int(rng.integers(0, 2))
            y = rng.uniform(-n, n)
            z, zn = sample_z_field(rng, two_state, t, x, rng.uniform(0.0, n))
            if clamped(t, x, y, z, zn) != osc(t, x, y, z, zn):
                exact_on_ball = False
        for m in (max(1.0, n / 2.0), n):
            if driver_seminorm(two_state, law, clamped, osc, m) != 0.0:
                seminorm_zero = False
        if growth_margin(two_state, clamped, samples=10_000, seed=int(n)) > 1.0 + 1e-12:
            growth_ok = False
    passed = exact_on_ball and seminorm_zero and growth_ok
    report(3, "truncation sequence properties", passed)
    assert exact_on_ball
    assert seminorm_zero
    assert growth_ok


def test_criterion_4_cascade_pipeline(two_state, osc, cascade_run):
    grid, h, field, diag = cascade_run
    u_direct = solve_direct(two_state, osc, h, grid)
    gap = float(np.max(np.abs(field.values - u_direct.values)))
    dists = diag.cauchy_distances
    strictly_decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    checks = lipschitz_profile_check(two_state, osc, diag.radii,
                                     samples_per_ball=3000, universal=2.0, seed=0)
    within = all(c.within_admissible for c in checks)
    passed = diag.converged and strictly_decreasing and gap <= 1e-5 and within
    report(4, "locally Lipschitz cascade", passed)
    assert strictly_decreasing, dists
    assert gap <= 1e-5
    assert within, [(c.radius, c.estimate, c.admissible) for c in checks]
    assert diag.converged


def test_criterion_5_apriori_estimates(two_state, osc, cascade_run):
    collapse = apriori_bounds(1.7, 0.0, 1.25)
    collapse_exact = collapse.y_sq == 1.25 and collapse.z_sq == 2.5
    law400 = uniform_start_law(two_state, two_state.grid(400))
    ok = []
    for name, drv, term in lipschitz_fixtures():
        h = TerminalCondition(term)
        u, _ = solve_picard(two_state, drv, h, two_state.grid(400), tol=1e-13)
        bounds = apriori_bounds(drv.growth_scale, two_state.horizon,
                                h.mean_square(law400), terminal_sq_sup=h.sup_square())
        ok.append(all_passed(check_apriori(two_state, law400, u, bounds)))
    grid, h, field, _ = cascade_run
    law_full = uniform_start_law(two_state, grid)
    bounds = apriori_bounds(osc.growth_scale, two_state.horizon,
                            h.mean_square(law_full), terminal_sq_sup=h.sup_square())
    ok.append(all_passed(check_apriori(two_state, law_full, field, bounds)))
    passed = collapse_exact and all(ok)
    report(5, "a-priori bounds", passed)
    assert collapse_exact
    assert all(ok), ok


def test_criterion_6_stability():
    model = MarkovModel(states=(0, 1), rate_matrix=[[0.0, 1.0], [1.0, 0.0]], horizon=0.5)
    drv = drivers.osc_sqrtlog(1.0)
    h = TerminalCondition(np.array([2.0, 1.8]))
    schedule = TruncationSchedule(radii=(2.0, 4.0, 8.0, 16.0), delta=0.1125,
                                  growth_exponent=0.5)
    perts = [shifted_problem(drv, h, 1.0 / n, label=f"n={n}")
             for n in (1, 2, 4, 8, 16, 32)]
    result = stability_experiment(model, drv, h, model.grid(500), perts,
                                  tol=1e-3, schedule=schedule)
    d = result.distances
    monotone = all(b < a for a, b in zip(d, d[1:]))
    dominated = all(r.dominated for r in result.runs)
    passed = monotone and d[-1] < 1e-3 and dominated and result.passed
    report(6, "perturbation stability", passed)
    assert monotone, d
    assert d[-1] < 1e-3
    assert dominated


def test_criterion_7_martingale_and_pathwise(two_state, indicator_terminal):
    drv = drivers.linear(-0.5, 0.2)
    u2000, _ = solve_picard(two_state, drv, indicator_terminal, two_state.grid(2000),
                            tol=1e-14)
    stats = verify_pathwise(two_state, drv, u2000, 0.0, 0, paths=10_000, seed=2718)
    martingale_ok = abs(stats.martingale_mean) <= 3.0 * stats.martingale_stderr
    residual_ok = stats.max_abs_residual <= 1e-3

    res = {}
    for n in (500, 1000):
        u, _ = solve_picard(two_state, drv, indicator_terminal, two_state.grid(n),
                            tol=1e-14)
        res[n] = verify_pathwise(two_state, drv, u, 0.0, 0, paths=4_000, seed=2718)
    order = math.log2(res[500].max_abs_residual / res[1000].max_abs_residual)
    passed = martingale_ok and residual_ok and order >= 0.9
    report(7, "martingale and pathwise identity", passed)
    assert martingale_ok, (stats.martingale_mean, stats.martingale_stderr)
    assert residual_ok, stats.max_abs_residual
    assert order >= 0.9, order


def test_criterion_8_pricing(two_state):
    from scipy.linalg import expm

    payoff = TerminalCondition(np.array([1.0, 0.0]))
    spec = MarketSpec(model=two_state, sigma=np.asarray(1.0),
                      generator=drivers.finance_discount(0.05), payoff=payoff)
    result = price_claim(spec, two_state.grid(2000), "lipschitz", tol=1e-14)
    q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    expected = math.exp(-0.05) * (expm(q) @ payoff.values)
    price_gap = float(np.max(np.abs(result.value.values[0] - expected)))
    checks = {c.bound_name: c for c in feasibility_check(spec, result)}
    feasible = result.feasibility_min >= -1e-9
    bounded = checks["wealth_sup_square"].passed

    spec2 = MarketSpec(model=two_state, sigma=np.asarray(1.0),
                       generator=drivers.constant(0.1), payoff=payoff)
    result2 = price_claim(spec2, two_state.grid(500), "lipschitz")
    feasible2 = result2.feasibility_min >= -1e-9 and all_passed(feasibility_check(spec2, result2))

    passed = price_gap <= 1e-6 and feasible and bounded and feasible2
    report(8, "claim pricing and feasibility", passed)
    assert price_gap <= 1e-6
    assert feasible and bounded
    assert feasible2


def test_criterion_9_reproducibility(tmp_path):
    cfg = {
        "model": {"states": ["up", "down"], "rates": [[0.0, 1.0], [1.0, 0.0]],
                  "horizon": 1.0},
        "driver": {"name": "linear", "params": {"a": -0.5, "c": 0.2}},
        "terminal": [1.0, 0.0],
        "grid": 200,
        "start": {"time": 0.0, "state": "up"},
        "seed": 424242,
        "solver": {"method": "picard", "tol": 1e-13},
        "verify": {"paths": 500, "max_residual": 1e-3},
    }
    config = tmp_path / "config.json"
    config.write_text(json.dumps(cfg))
    bodies = []
    for run, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / run
        assert main(["solve", "--config", str(config), "--out", str(out)]) == 0
        assert main(["verify", "--config", str(config), "--out", str(out),
                     "--threads", threads]) == 0
        assert main(["simulate", "--config", str(config), "--out", str(out),
                     "--threads", threads]) == 0
        bodies.append({name: (out / name).read_bytes()
                       for name in ("u.csv", "diagnostics.csv", "residuals.json",
                                    "apriori.json", "paths.csv")})
    identical = bodies[0] == bodies[1] == bodies[2]
    report(9, "byte-identical reproducibility", identical)
    assert identical
