"""Backward solvers for globally Lipschitz generators.

The workhorse is a fixed-step classical RK4 sweep of the coupled
backward ODE system in the state variable.  ``solve_picard`` iterates
the linear sweep with the generator frozen at the previous iterate (the
numerical form of the contraction argument behind well-posedness);
``solve_direct`` integrates the nonlinear system head-on and serves as
the independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import Driver, TerminalCondition, ValueField, b_distance
from .markov import MarginalLaw, MarkovModel, uniform_start_law

__all__ = [
    "DivergenceError",
    "PicardDiagnostics",
    "solve_linear_fk",
    "picard_step",
    "solve_picard",
    "solve_direct",
]


class DivergenceError(RuntimeError):
    """Raised when a backward sweep produces a non-finite value."""

    def __init__(self, grid_index: int, time: float):
        self.grid_index = grid_index
        self.time = time
        super().__init__(f"non-finite value at grid index {grid_index} (t={time})")


@dataclass
class PicardDiagnostics:
    """Iteration record: squared distances between successive iterates."""

    iterations: int
    distances: list[float]
    contraction_ratios: list[float]
    converged: bool


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must hold at least two points")
    if not np.all(np.diff(grid) > 0.0):
        raise ValueError("grid must be strictly increasing")
    return grid


def _jump_operator(model: MarkovModel, t: float, u: np.ndarray) -> np.ndarray:
    # (A u)(x) = sum_y (u(y) - u(x)) rates(t, x, y)
    scale = float(model.rate_scale(t))
    return scale * (model.rate_matrix @ u - model._row_sums * u)


def _source_rows(source, model: MarkovModel, grid: np.ndarray) -> np.ndarray:
    """Node table of the inhomogeneity, from a callable or a ready table."""
    if callable(source):
        return np.array([[float(source(t, x)) for x in range(model.n_states)] for t in grid])
    table = np.asarray(source, dtype=float)
    if table.shape != (grid.size, model.n_states):
        raise ValueError("source table must be (grid points, states)")
    return table


def solve_linear_fk(model: MarkovModel, source, terminal: TerminalCondition,
                    grid: np.ndarray) -> ValueField:
    """Backward sweep of du/dt = -A(t)u - g(t, .), u(T) = terminal.

    ``source`` is either a callable ``g(t, x)`` or a node table of
    values on the grid; tabulated sources are interpolated linearly at
    the RK4 midpoints.  The terminal row is pinned exactly.
    """
    grid = _check_grid(grid)
    g = _source_rows(source, model, grid)
    n = grid.size
    vals = np.empty((n, model.n_states))
    vals[-1] = terminal.values
    u = vals[-1].copy()
    for i in range(n - 2, -1, -1):
        t1 = grid[i + 1]
        h = grid[i] - t1                       # negative step
        g_hi, g_lo = g[i + 1], g[i]
        g_mid = 0.5 * (g_hi + g_lo)
        t_mid = t1 + 0.5 * h
        k1 = -_jump_operator(model, t1, u) - g_hi
        k2 = -_jump_operator(model, t_mid, u + 0.5 * h * k1) - g_mid
        k3 = -_jump_operator(model, t_mid, u + 0.5 * h * k2) - g_mid
        k4 = -_jump_operator(model, grid[i], u + h * k3) - g_lo
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(i, float(grid[i]))
        vals[i] = u
    return ValueField(grid=grid, values=vals)


def _frozen_source(model: MarkovModel, driver: Driver, u: ValueField) -> np.ndarray:
    """Generator evaluated along a fixed field: g(t_i, x) = f(t_i, x, u, z_u)."""
    grid, vals = u.grid, u.values
    scale = np.asarray(model.rate_scale(grid), dtype=float)
    table = np.empty_like(vals)
    for x in range(model.n_states):
        z = vals - vals[:, x][:, None]
        norms = np.sqrt(scale * np.sum(model.rate_matrix[x] * z * z, axis=1))
        table[:, x] = np.asarray(driver(grid, x, vals[:, x], z, norms), dtype=float)
    return table


def picard_step(model: MarkovModel, driver: Driver, u_prev: ValueField,
                terminal: TerminalCondition, grid: np.ndarray) -> ValueField:
    """One fixed-point iteration: linear sweep with the source frozen at u_prev."""
    grid = _check_grid(grid)
    if not np.array_equal(u_prev.grid, grid):
        raise ValueError("previous iterate lives on a different grid")
    return solve_linear_fk(model, _frozen_source(model, driver, u_prev), terminal, grid)


def solve_picard(model: MarkovModel, driver: Driver, terminal: TerminalCondition,
                 grid: np.ndarray, tol: float = 1e-12, max_iter: int = 200, *,
                 law: MarginalLaw | None = None,
                 u0: ValueField | None = None) -> tuple[ValueField, PicardDiagnostics]:
    """Fixed-point iteration for a globally Lipschitz generator.

    Starts from the zero-generator sweep (or ``u0`` when given, e.g. a
    warm start) and iterates until the squared solution-space distance
    between successive iterates drops below ``tol``.  Exhausting
    ``max_iter`` is reported through the diagnostics, not raised.  The
    stopping metric is evaluated against ``law`` (default: the law
    seeded from the uniform state mix, which dominates every point
    start).
    """
    grid = _check_grid(grid)
    if driver.global_lipschitz is None:
        raise ValueError("solve_picard requires a globally Lipschitz driver")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if law is None:
        law = uniform_start_law(model, grid)
    elif not np.array_equal(law.grid, grid):
        raise ValueError("law must live on the solver grid")
    u = u0 if u0 is not None else solve_linear_fk(model, np.zeros((grid.size, model.n_states)), terminal, grid)
    if not np.array_equal(u.grid, grid):
        raise ValueError("u0 lives on a different grid")
    distances: list[float] = []
    converged = False
    for _ in range(max_iter):
        u_next = picard_step(model, driver, u, terminal, grid)
        d = b_distance(model, law, u_next, u)
        distances.append(d)
        u = u_next
        if d < tol:
            converged = True
            break
    ratios = [distances[k + 1] / distances[k] if distances[k] > 0.0 else 0.0
              for k in range(len(distances) - 1)]
    return u, PicardDiagnostics(iterations=len(distances), distances=distances,
                                contraction_ratios=ratios, converged=converged)


def solve_direct(model: MarkovModel, driver: Driver, terminal: TerminalCondition,
                 grid: np.ndarray) -> ValueField:
    """RK4 sweep of the fully nonlinear backward system (oracle path).

    Raises :class:`DivergenceError` naming the first bad grid point when
    the integration produces a non-finite value.
    """
    grid = _check_grid(grid)
    K = model.n_states
    xs = np.arange(K)

    def rhs(t: float, w: np.ndarray) -> np.ndarray:
        z = w[None, :] - w[:, None]            # z[x, y] = w[y] - w[x]
        scale = float(model.rate_scale(t))
        norms = np.sqrt(scale * np.sum(model.rate_matrix * z * z, axis=1))
        fvals = np.asarray(driver(t, xs, w, z, norms), dtype=float)
        return -_jump_operator(model, t, w) - fvals

    vals = np.empty((grid.size, K))
    vals[-1] = terminal.values
    u = vals[-1].copy()
    for i in range(grid.size - 2, -1, -1):
        t1 = grid[i + 1]
        h = grid[i] - t1
        t_mid = t1 + 0.5 * h
        k1 = rhs(t1, u)
        k2 = rhs(t_mid, u + 0.5 * h * k1)
        k3 = rhs(t_mid, u + 0.5 * h * k2)
        k4 = rhs(grid[i], u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(i, float(grid[i]))
        vals[i] = u
    return ValueField(grid=grid, values=vals)
