"""Backward SDE solvers driven by finite-state jump Markov processes.

The package builds jump Markov models, solves the associated backward
equations for globally and locally Lipschitz generators, and verifies
the explicit a-priori bounds, the perturbation stability of solutions,
and the pathwise martingale structure by simulation.
"""

from .bsde import (Driver, TerminalCondition, ValueField, b_distance, z_field_from_value,
                   z_norm)
from .estimates import (AprioriBounds, Perturbation, StabilityReport, apriori_bounds,
                        check_apriori, difference_bound, difference_constant,
                        driver_seminorm, shifted_problem, stability_experiment)
from .finance import MarketSpec, PricingResult, feasibility_check, price_claim
from .markov import (MarginalLaw, MarkovModel, Modulation, Trajectory,
                     compensated_integral, marginal_law, simulate_batch, simulate_path)
from .montecarlo import ResidualStats, verify_pathwise
from .picard import (DivergenceError, PicardDiagnostics, picard_step, solve_direct,
                     solve_linear_fk, solve_picard)
from .truncation import (CascadeDiagnostics, CascadeError, TruncationSchedule,
                         lipschitz_profile_check, solve_local, truncate_driver)

__version__ = "0.1.0"
