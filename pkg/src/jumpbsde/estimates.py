"""Explicit a-priori constants and the checks pairing them with solves.

Everything here is computable: the square-mean bounds on the solution
pair, the ball-restricted sup seminorm between generators, the
two-solution difference bounds, and the perturbation (stability)
experiment that drives all of them against measured quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .bsde import Driver, TerminalCondition, ValueField, b_distance, growth_margin
from .drivers import shifted
from .markov import MarginalLaw, MarkovModel, uniform_start_law
from .truncation import TruncationSchedule, solve_local

__all__ = [
    "AprioriBounds",
    "apriori_bounds",
    "BoundCheck",
    "check_apriori",
    "driver_seminorm",
    "difference_constant",
    "difference_bound",
    "Perturbation",
    "shifted_problem",
    "StabilityRun",
    "StabilityReport",
    "stability_experiment",
]


@dataclass(frozen=True)
class AprioriBounds:
    """Computable bounds on a solution pair, with the inputs they used.

    ``y_sq`` bounds ``sup_s E|Y_s|^2``, ``z_sq`` bounds the integrated
    squared z-norm, and ``y_sup_sq`` bounds ``sup |Y|^2`` when the
    terminal data is bounded (always true on a finite state set, but
    only filled in when a sup was supplied).
    """

    y_sq: float
    z_sq: float
    y_sup_sq: float | None
    growth_scale: float
    horizon: float
    terminal_sq_mean: float
    terminal_sq_sup: float | None


def apriori_bounds(growth_scale: float, horizon: float, terminal_sq_mean: float,
                   terminal_sq_sup: float | None = None) -> AprioriBounds:
    """Evaluate the explicit square-mean bounds.

    ``y_sq = (E|xi|^2 + 9T) exp((1 + 3 lam^2) T)``,
    ``z_sq = 2 (E|xi|^2 + 9T) + 2T (1 + 4 lam^2) y_sq`` and, for bounded
    terminal data, ``y_sup_sq = (sup|xi|^2 + 9T) exp((9T + lam^2 + 2 lam) T)``
    (the worst case of the time-decaying exponent).  At ``T = 0`` they
    collapse to ``E|xi|^2`` and ``2 E|xi|^2`` exactly.
    """
    lam = float(growth_scale)
    T = float(horizon)
    e_xi = float(terminal_sq_mean)
    if lam <= 0.0:
        raise ValueError("growth scale must be positive")
    if T < 0.0:
        raise ValueError("horizon must be nonnegative")
    if e_xi < 0.0:
        raise ValueError("terminal square mean must be nonnegative")
    y_sq = (e_xi + 9.0 * T) * math.exp((1.0 + 3.0 * lam * lam) * T)
    z_sq = 2.0 * (e_xi + 9.0 * T) + 2.0 * T * (1.0 + 4.0 * lam * lam) * y_sq
    y_sup_sq = None
    if terminal_sq_sup is not None:
        sup_xi = float(terminal_sq_sup)
        if sup_xi < 0.0:
            raise ValueError("terminal square sup must be nonnegative")
        y_sup_sq = (sup_xi + 9.0 * T) * math.exp((9.0 * T + lam * lam + 2.0 * lam) * T)
    return AprioriBounds(y_sq=y_sq, z_sq=z_sq, y_sup_sq=y_sup_sq,
                         growth_scale=lam, horizon=T,
                         terminal_sq_mean=e_xi, terminal_sq_sup=terminal_sq_sup)


@dataclass(frozen=True)
class BoundCheck:
    bound_name: str
    formula_inputs: dict
    bound_value: float
    measured_value: float
    passed: bool

    def as_record(self) -> dict:
        return {"bound_name": self.bound_name, "formula_inputs": self.formula_inputs,
                "bound_value": self.bound_value, "measured_value": self.measured_value,
                "pass": self.passed}


def _measured_moments(model: MarkovModel, law: MarginalLaw, u: ValueField):
    """(max_s E|Y_s|^2, int E||Z||^2 dr, sup |u|^2) against the law."""
    if not np.array_equal(u.grid, law.grid):
        raise ValueError("field and law must share one grid")
    vals = u.values
    y_sq = np.sum(law.probs * vals * vals, axis=1)
    diff = vals[:, None, :] - vals[:, :, None]
    znorm_sq = np.einsum("ixy,xy->ix", diff * diff, model.rate_matrix)
    znorm_sq = znorm_sq * np.asarray(model.rate_scale(law.grid)).reshape(-1, 1)
    z_int = float(np.trapezoid(np.sum(law.probs * znorm_sq, axis=1), law.grid))
    return float(np.max(y_sq)), z_int, float(np.max(vals * vals))


def check_apriori(model: MarkovModel, law: MarginalLaw, u: ValueField,
                  bounds: AprioriBounds) -> list[BoundCheck]:
    """Compare the measured solution moments against the explicit bounds."""
    max_y_sq, z_int, sup_u_sq = _measured_moments(model, law, u)
    inputs = {"growth_scale": bounds.growth_scale, "horizon": bounds.horizon,
              "terminal_sq_mean": bounds.terminal_sq_mean}
    checks = [
        BoundCheck("max_mean_square_y", inputs, bounds.y_sq, max_y_sq,
                   max_y_sq <= bounds.y_sq),
        BoundCheck("integrated_square_z", inputs, bounds.z_sq, z_int,
                   z_int <= bounds.z_sq),
    ]
    if bounds.y_sup_sq is not None:
        sup_inputs = dict(inputs, terminal_sq_sup=bounds.terminal_sq_sup)
        checks.append(BoundCheck("sup_square_y", sup_inputs, bounds.y_sup_sq,
                                 sup_u_sq, sup_u_sq <= bounds.y_sup_sq))
    return checks


def all_passed(checks: list[BoundCheck]) -> bool:
    return all(c.passed for c in checks)


# --- ball-restricted sup seminorm between two generators -------------------

_SCALE_FLOOR = 0.25
_SCALE_RATIO = math.sqrt(2.0)


def _scale_ladder(radius: float) -> list[float]:
    """Fixed geometric radius ladder up to ``radius``; ladders nest in M."""
    scales = []
    s = _SCALE_FLOOR
    while s <= radius * (1.0 + 1e-12):
        scales.append(min(s, radius))
        s *= _SCALE_RATIO
    return scales


def _sobol_block(dim: int, count: int) -> np.ndarray:
    m = max(1, int(math.ceil(math.log2(max(count, 2)))))
    return qmc.Sobol(d=dim, scramble=False).random_base2(m)


def driver_seminorm(model: MarkovModel, law: MarginalLaw, driver1: Driver,
                    driver2: Driver, radius: float, grid: np.ndarray | None = None,
                    ball_samples: int = 1024) -> float:
    """Ball-restricted sup distance between two generators.

    ``sqrt(E int sup_{|y|,||z|| <= M} |f1 - f2|^2 ds)`` with the
    expectation against ``law``, time by the trapezoid rule on the law's
    grid, and the inner sup approximated over low-discrepancy points.
    The points are a fixed direction block scaled along an absolute
    geometric radius ladder, so the sampled point sets (hence the
    values) are nondecreasing in ``M``.
    """
    if radius < 1.0:
        raise ValueError("radius must be at least 1")
    if grid is not None and not np.array_equal(np.asarray(grid, float), law.grid):
        raise ValueError("grid must match the law's grid")
    K = model.n_states
    block = _sobol_block(K + 1, ball_samples)
    y_unit = 2.0 * block[:, 0] - 1.0                 # y in [-1, 1] per unit scale
    z_frac = block[:, 1]                             # |z| fraction of the scale
    raw_dir = 2.0 * block[:, 2:] - 1.0               # K-1 field components
    scales = np.array(_scale_ladder(radius))
    y_all = (scales[:, None] * y_unit[None, :]).reshape(-1)
    n_all = (scales[:, None] * z_frac[None, :]).reshape(-1)

    mat = model.rate_matrix
    grid_t = law.grid
    sup_sq = np.empty((grid_t.size, K))
    for x in range(K):
        raw = np.zeros((block.shape[0], K))
        raw[:, [y for y in range(K) if y != x]] = raw_dir
        base_sq = np.sum(raw * raw * mat[x], axis=1)          # time factor applied below
        for i, t in enumerate(grid_t):
            m_t = float(model.rate_scale(t))
            base = np.sqrt(m_t * base_sq)
            factor = np.divide(1.0, base, out=np.zeros_like(base), where=base > 0.0)
            z_dirs = raw * factor[:, None]                     # unit norm at (t, x)
            z_all = (n_all[:, None] * np.tile(z_dirs, (scales.size, 1)))
            v1 = np.asarray(driver1(t, x, y_all, z_all, n_all), dtype=float)
            v2 = np.asarray(driver2(t, x, y_all, z_all, n_all), dtype=float)
            sup_sq[i, x] = float(np.max((v1 - v2) ** 2))
    integrand = np.sum(law.probs * sup_sq, axis=1)
    return float(math.sqrt(max(np.trapezoid(integrand, grid_t), 0.0)))


# --- difference bounds between two solved problems --------------------------


def difference_constant(growth_scale: float, growth_exponent: float, horizon: float,
                        terminal_sq_1: float, terminal_sq_2: float) -> float:
    """Computable envelope of the two-solution comparison constant.

    Obtained by running the comparison argument with the explicit
    square-mean bounds of both problems; it depends on the growth scale
    squared, both terminal square means, and the horizon (which is
    logged alongside every bound that uses it).
    """
    lam = float(growth_scale)
    alpha = float(growth_exponent)
    T = float(horizon)
    b1 = apriori_bounds(lam, T, terminal_sq_1)
    b2 = apriori_bounds(lam, T, terminal_sq_2)
    c1 = max(b1.y_sq, b2.y_sq)
    c2 = max(b1.z_sq, b2.z_sq)
    mixed = (c1 + c2) * (T + 1.0)
    return 6.0 * lam * lam * (2.0 * T
                              + 2.0 * (c1 * T) ** alpha * mixed ** (1.0 - alpha)
                              + 2.0 * c2 ** (alpha / 2.0) * mixed ** (1.0 - alpha / 2.0))


def difference_bound(constant: float, terminal_gap_sq: float, seminorm_1: float,
                     seminorm_2: float, lipschitz_m: float, radius_m: float,
                     growth_exponent: float, horizon: float,
                     s: float) -> tuple[float, Callable[[float], float]]:
    """Pointwise bound on ``E|Y1_s - Y2_s|^2`` plus the z-part map.

    Returns ``(y_bound, z_bound_fn)`` where ``z_bound_fn`` sends a
    measured value of ``(E int |Y1-Y2|^2 dr)^(1/2)`` to the bound on the
    integrated squared z-gap.
    """
    if radius_m <= 1.0:
        raise ValueError("radius must exceed 1")
    for name, v in (("constant", constant), ("terminal_gap_sq", terminal_gap_sq),
                    ("seminorm_1", seminorm_1), ("seminorm_2", seminorm_2),
                    ("lipschitz_m", lipschitz_m)):
        if v < 0.0:
            raise ValueError(f"{name} must be nonnegative")
    L2 = lipschitz_m * lipschitz_m
    bracket = (terminal_gap_sq + seminorm_1 ** 2 + seminorm_2 ** 2
               + constant / ((1.0 + 2.0 * L2) * radius_m ** (2.0 * (1.0 - growth_exponent))))
    y_bound = bracket * math.exp((4.0 + 4.0 * L2) * (horizon - s))

    def z_bound_fn(measured_y_root: float) -> float:
        return constant * (terminal_gap_sq + measured_y_root)

    return y_bound, z_bound_fn


# --- perturbation (stability) experiment ------------------------------------


@dataclass(frozen=True)
class Perturbation:
    """A perturbed problem; ``sup_difference`` is set when the generator
    gap is a known constant, making the seminorm exact."""

    driver: Driver
    terminal: TerminalCondition
    label: str = ""
    sup_difference: float | None = None


def shifted_problem(driver: Driver, terminal: TerminalCondition, offset: float,
                    label: str | None = None) -> Perturbation:
    """Additive-constant perturbation of generator and terminal data."""
    return Perturbation(driver=shifted(driver, offset), terminal=terminal.shifted(offset),
                        label=label if label is not None else f"offset={offset:g}",
                        sup_difference=abs(float(offset)))


@dataclass(frozen=True)
class StabilityRun:
    label: str
    measured_sq_distance: float
    predicted_bound: float
    seminorm: float
    terminal_gap_sq: float
    dominated: bool
    inputs: dict = dc_field(default_factory=dict)


@dataclass
class StabilityReport:
    runs: list[StabilityRun]
    passed: bool

    @property
    def distances(self) -> list[float]:
        return [r.measured_sq_distance for r in self.runs]


def _eventually_decreasing(values: list[float]) -> bool:
    if len(values) <= 1:
        return True
    peak = int(np.argmax(values))
    tail = values[peak:]
    return all(b <= a for a, b in zip(tail, tail[1:]))


def stability_experiment(model: MarkovModel, driver: Driver, terminal: TerminalCondition,
                         grid: np.ndarray, perturbations: list[Perturbation], tol: float,
                         schedule: TruncationSchedule, *, law: MarginalLaw | None = None,
                         bound_radius: float = 16.0, phi_points: int = 17,
                         ball_samples: int = 1024, growth_samples: int = 2_000,
                         seed: int = 0) -> StabilityReport:
    """Solve the base and perturbed problems; measure and bound their gaps.

    Each perturbed generator is sample-checked against the shared growth
    bound first.  The run passes when the measured squared distances are
    eventually decreasing with the final one below ``tol``; every
    distance is paired with its computable difference-bound envelope.
    """
    grid = np.asarray(grid, dtype=float)
    if law is None:
        law = uniform_start_law(model, grid)
    duration = float(grid[-1] - grid[0])
    u_base, _ = solve_local(model, driver, terminal, grid, schedule, law=law)
    lam_uniform = max([driver.growth_scale] + [p.driver.growth_scale for p in perturbations])
    e_xi_base = terminal.mean_square(law)
    lip_m = float(driver.lipschitz_profile(bound_radius))

    stride = max(1, (grid.size - 1) // max(phi_points - 1, 1))
    idx = np.arange(0, grid.size, stride)
    if idx[-1] != grid.size - 1:
        idx = np.append(idx, grid.size - 1)
    coarse_law = MarginalLaw(grid=law.grid[idx], probs=law.probs[idx])

    runs: list[StabilityRun] = []
    for k, pert in enumerate(perturbations):
        margin = growth_margin(model, pert.driver, samples=growth_samples,
                               seed=seed + k, scale=lam_uniform)
        if margin > 1.0 + 1e-9:
            raise ValueError(
                f"perturbation {pert.label!r} violates the shared growth bound "
                f"(sampled margin {margin:.3f})")
        u_pert, _ = solve_local(model, pert.driver, pert.terminal, grid, schedule, law=law)
        measured = b_distance(model, law, u_base, u_pert)
        if pert.sup_difference is not None:
            phi = pert.sup_difference * math.sqrt(duration)
        else:
            phi = driver_seminorm(model, coarse_law, pert.driver, driver,
                                  bound_radius, ball_samples=ball_samples)
        gap_sq = float(law.probs[-1] @ (pert.terminal.values - terminal.values) ** 2)
        const = difference_constant(lam_uniform, driver.growth_exponent, duration,
                                    e_xi_base, pert.terminal.mean_square(law))
        y_bound, z_bound_fn = difference_bound(const, gap_sq, phi, 0.0, lip_m,
                                               bound_radius, driver.growth_exponent,
                                               duration, 0.0)
        # integral of bracket * exp(kappa (T - s)) over the horizon
        kappa = 4.0 + 4.0 * lip_m * lip_m
        bracket = y_bound / math.exp(kappa * duration)
        y_int_bound = bracket * (math.exp(kappa * duration) - 1.0) / kappa
        predicted = y_int_bound + z_bound_fn(math.sqrt(y_int_bound))
        inputs = {"constant": const, "lipschitz_m": lip_m, "radius": bound_radius,
                  "growth_scale": lam_uniform, "duration": duration}
        runs.append(StabilityRun(label=pert.label, measured_sq_distance=measured,
                                 predicted_bound=predicted, seminorm=phi,
                                 terminal_gap_sq=gap_sq,
                                 dominated=measured <= predicted, inputs=inputs))
    distances = [r.measured_sq_distance for r in runs]
    passed = (_eventually_decreasing(distances)
              and (not distances or distances[-1] < tol)
              and all(r.dominated for r in runs))
    return StabilityReport(runs=runs, passed=passed)
