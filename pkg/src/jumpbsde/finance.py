"""Claim pricing on a jump-driven wealth equation.

The wealth dynamics carry a generator acting on the portfolio field and
a per-edge volatility with bounded inverse.  Substituting the scaled
field turns the wealth equation into a standard backward problem; the
hedge is recovered by dividing the solved z-field by the volatility.
Feasibility (nonnegative claim value) is checked, not assumed: it holds
when the payoff is nonnegative and the generator is nonnegative at the
origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsde import Driver, TerminalCondition, ValueField
from .estimates import BoundCheck, apriori_bounds
from .markov import MarkovModel
from .picard import PicardDiagnostics, solve_picard
from .truncation import CascadeDiagnostics, TruncationSchedule, solve_local

__all__ = ["MarketSpec", "PricingResult", "price_claim", "feasibility_check"]

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarketSpec:
    """Market data: model, per-edge volatility, wealth generator, payoff.

    ``sigma[x, y]`` is the volatility of the channel from state ``x``
    toward ``y``; a scalar broadcasts.  Entries must be bounded away
    from zero so the inverse is bounded.  The payoff must be
    nonnegative (it is a contingent claim).
    """

    model: MarkovModel
    sigma: np.ndarray
    generator: Driver
    payoff: TerminalCondition

    def __post_init__(self) -> None:
        K = self.model.n_states
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 0:
            sig = np.full((K, K), float(sig))
        if sig.shape != (K, K):
            raise ValueError("sigma must be scalar or a (states, states) matrix")
        if not np.all(np.isfinite(sig)):
            raise ValueError("sigma must be finite")
        if np.any(np.abs(sig) <= 0.0):
            raise ValueError("sigma must be bounded away from zero (invertible)")
        sig.setflags(write=False)
        object.__setattr__(self, "sigma", sig)
        if self.payoff.values.shape != (K,):
            raise ValueError("payoff must assign one value per state")
        if np.any(self.payoff.values < 0.0):
            raise ValueError("payoff must be nonnegative")

    @property
    def sigma_min(self) -> float:
        return float(np.min(np.abs(self.sigma)))

    def induced_driver(self) -> Driver:
        """Generator on the scaled field: f(t,x,y,z) = g(t,x,y, z/sigma).

        The portfolio field is ``z / sigma`` row-wise; its rate-weighted
        norm is recomputed at the evaluation point.  Declared constants
        are inflated by the inverse-volatility bound.
        """
        g = self.generator
        sig = self.sigma
        mat = self.model.rate_matrix
        model = self.model
        kappa = max(1.0, 1.0 / self.sigma_min)

        def f(t, x, y, z, zn):
            x_idx = np.asarray(x)
            pi = np.asarray(z, dtype=float) / sig[x_idx]
            w = mat[x_idx]
            scale = np.asarray(model.rate_scale(t), dtype=float)
            pi_norm = np.sqrt(scale * np.sum(w * pi * pi, axis=-1))
            return g(t, x, y, pi, pi_norm)

        alpha = g.growth_exponent
        return Driver(
            f=f,
            growth_scale=g.growth_scale * kappa ** alpha,
            growth_exponent=alpha,
            lipschitz_profile=lambda m: kappa * g.lipschitz_profile(kappa * m),
            global_lipschitz=None if g.global_lipschitz is None else kappa * g.global_lipschitz,
            universal_lipschitz=g.universal_lipschitz if kappa == 1.0 else None,
            growth_ball=None if g.growth_ball is None else g.growth_ball / kappa,
        )


@dataclass
class PricingResult:
    """Claim value field, hedge field, and feasibility summary."""

    value: ValueField
    strategy: np.ndarray          # (grid, state, counterparty) hedge positions
    feasibility_min: float
    wealth_bound_sq: float        # sup-square bound for the bounded claim
    diagnostics: PicardDiagnostics | CascadeDiagnostics


def price_claim(spec: MarketSpec, grid: np.ndarray, method: str = "lipschitz", *,
                schedule: TruncationSchedule | None = None, tol: float = 1e-12,
                max_iter: int = 200) -> PricingResult:
    """Solve the wealth equation and extract the hedging strategy.

    ``method`` selects the globally Lipschitz fixed-point solver or the
    truncation cascade.  Configuration problems (missing constants for
    the chosen solver, invalid schedule) raise ``ValueError`` naming the
    violated requirement.
    """
    grid = np.asarray(grid, dtype=float)
    induced = spec.induced_driver()
    if method == "lipschitz":
        if induced.global_lipschitz is None:
            raise ValueError("lipschitz solver requires a globally Lipschitz generator")
        value, diag = solve_picard(spec.model, induced, spec.payoff, grid,
                                   tol=tol, max_iter=max_iter)
    elif method == "local":
        if schedule is None:
            schedule = TruncationSchedule.for_driver(induced)
        value, diag = solve_local(spec.model, induced, spec.payoff, grid, schedule)
    else:
        raise ValueError(f"unknown solver method {method!r}")

    vals = value.values
    z = vals[:, None, :] - vals[:, :, None]       # z[i, x, y] = u(t_i, y) - u(t_i, x)
    strategy = z / spec.sigma[None, :, :]
    bounds = apriori_bounds(induced.growth_scale, float(grid[-1] - grid[0]),
                            float(np.max(spec.payoff.values ** 2)),
                            terminal_sq_sup=spec.payoff.sup_square())
    return PricingResult(value=value, strategy=strategy,
                         feasibility_min=float(np.min(vals)),
                         wealth_bound_sq=float(bounds.y_sup_sq),
                         diagnostics=diag)


def feasibility_check(spec: MarketSpec, result: PricingResult) -> list[BoundCheck]:
    """Feasibility report for a priced claim.

    Rows: generator nonnegative at the origin, payoff nonnegative, value
    nonnegative up to the rounding allowance, and the bounded-claim
    square bound.  The value row is only required to pass when the first
    two hold (they are its sufficient condition).
    """
    model = spec.model
    grid = result.value.grid
    g_min = math.inf
    for x in range(model.n_states):
        vals = np.asarray(spec.generator(grid, x, np.zeros(grid.size),
                                         np.zeros((grid.size, model.n_states)),
                                         np.zeros(grid.size)), dtype=float)
        g_min = min(g_min, float(np.min(vals)) + 0.0)
    payoff_min = float(np.min(spec.payoff.values))
    sup_u_sq = float(np.max(result.value.values ** 2))
    premise = g_min >= 0.0 and payoff_min >= 0.0
    return [
        BoundCheck("generator_nonneg_at_origin", {}, 0.0, g_min, g_min >= 0.0),
        BoundCheck("payoff_nonneg", {}, 0.0, payoff_min, payoff_min >= 0.0),
        BoundCheck("value_nonneg", {"tolerance": FEASIBILITY_TOL}, -FEASIBILITY_TOL,
                   result.feasibility_min,
                   (not premise) or result.feasibility_min >= -FEASIBILITY_TOL),
        BoundCheck("wealth_sup_square", {"bound": result.wealth_bound_sq},
                   result.wealth_bound_sq, sup_u_sq, sup_u_sq <= result.wealth_bound_sq),
    ]
