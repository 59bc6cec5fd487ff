"""Backward-equation data: terminal conditions, drivers, value fields.

Solutions are represented as deterministic fields ``u(t, x)`` on a time
grid.  The first solution component at time ``s`` is ``u(s, X_s)``; the
second is the state-difference field ``z(y) = u(s, y) - u(s, X_s-)``.
The squared norm used for every convergence statement integrates the
mean square of both components against a marginal law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .markov import MarginalLaw, MarkovModel

__all__ = [
    "TerminalCondition",
    "Driver",
    "ValueField",
    "z_field_from_value",
    "z_norm",
    "b_distance",
    "sample_z_field",
    "growth_margin",
    "lipschitz_quotient",
]


@dataclass(frozen=True, eq=False)
class TerminalCondition:
    """Terminal payoff per state.  Square integrability is automatic."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("terminal values must be a 1-d array over states")
        if not np.all(np.isfinite(vals)):
            raise ValueError("terminal values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, fn: Callable, model: MarkovModel) -> "TerminalCondition":
        return cls(np.array([float(fn(s)) for s in model.states]))

    def shifted(self, offset: float) -> "TerminalCondition":
        return TerminalCondition(self.values + offset)

    def mean_square(self, law: MarginalLaw) -> float:
        """E|h(X_T)|^2 under the law's final row."""
        return float(law.probs[-1] @ (self.values ** 2))

    def sup_square(self) -> float:
        return float(np.max(self.values ** 2))


@dataclass(frozen=True, eq=False)
class Driver:
    """Generator ``f(t, x, y, z, ||z||)`` with its declared regularity.

    The callable receives the z-field as an array over states together
    with its rate-weighted norm at the evaluation point, and must
    broadcast over leading batch dimensions of ``(t, x, y, z, ||z||)``
    (solvers evaluate it on whole grids at once).

    ``growth_scale``/``growth_exponent`` declare the sublinear bound
    ``|f| <= scale * (1 + |y|**p + ||z||**p)``; when ``growth_ball`` is
    set the bound is only asserted for arguments inside that ball.
    ``lipschitz_profile(M)`` dominates the Lipschitz constant on the ball
    of radius M; ``global_lipschitz`` is set when one constant works
    everywhere.  ``universal_lipschitz`` is the offset ``L`` in the
    admissible profile growth ``L_M <= L + sqrt(log M)``.
    """

    f: Callable
    growth_scale: float
    growth_exponent: float
    lipschitz_profile: Callable[[float], float]
    global_lipschitz: float | None = None
    universal_lipschitz: float | None = None
    growth_ball: float | None = None

    def __post_init__(self) -> None:
        if not self.growth_scale > 0.0:
            raise ValueError("growth scale must be positive")
        if not 0.0 < self.growth_exponent < 1.0:
            raise ValueError("growth exponent must lie in (0, 1)")

    def __call__(self, t, x, y, z_values, z_norm):
        return self.f(t, x, y, z_values, z_norm)


@dataclass(frozen=True, eq=False)
class ValueField:
    """Field ``u(t, x)`` on a time grid; rows are per-grid-point state vectors."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must hold at least two points")
        if not np.all(np.diff(grid) > 0.0):
            raise ValueError("grid must be strictly increasing")
        if values.ndim != 2 or values.shape[0] != grid.size:
            raise ValueError("values must have one row per grid point")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n_states(self) -> int:
        return self.values.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def index_of(self, t: float) -> int:
        idx = int(np.searchsorted(self.grid, t))
        if idx >= self.grid.size or self.grid[idx] != t:
            raise ValueError(f"time {t} is not on the grid")
        return idx

    def row(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]

    def at(self, t: float, x: int) -> float:
        return float(self.values[self.index_of(t), x])

    def interp_rows(self, ts) -> np.ndarray:
        """Rows at arbitrary times by linear interpolation (clamped ends)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.clip(np.searchsorted(self.grid, ts, side="right") - 1, 0, self.grid.size - 2)
        t0 = self.grid[idx]
        w = (ts - t0) / (self.grid[idx + 1] - t0)
        w = np.clip(w, 0.0, 1.0)[:, None]
        return (1.0 - w) * self.values[idx] + w * self.values[idx + 1]

    def restrict(self, i0: int, i1: int) -> "ValueField":
        """Sub-field on the grid slice ``[i0, i1]`` (inclusive)."""
        return ValueField(grid=self.grid[i0:i1 + 1], values=self.values[i0:i1 + 1])


def z_field_from_value(u: ValueField, t: float, x: int) -> np.ndarray:
    """State-difference field ``z(y) = u(t, y) - u(t, x)`` at a grid time.

    ``t`` must be a grid point; no silent interpolation.
    """
    row = u.row(t)
    return row - row[x]


def z_norm(model: MarkovModel, t: float, x, z: np.ndarray) -> float:
    """Rate-weighted L2 norm of a z-field at ``(t, x)``."""
    z = np.asarray(z, dtype=float)
    row = model.rates_row(t, x)
    return float(np.sqrt(np.sum(row * z * z)))


def b_distance(model: MarkovModel, law: MarginalLaw, u1: ValueField, u2: ValueField) -> float:
    """Squared solution-space distance between two value fields.

    ``E int |Y1-Y2|^2 dr + E int ||Z1-Z2||^2 dr`` with the expectation
    taken against ``law`` and time integrals by the trapezoid rule on
    the shared grid.
    """
    if not (np.array_equal(u1.grid, u2.grid) and np.array_equal(u1.grid, law.grid)):
        raise ValueError("fields and law must share one grid")
    d = u1.values - u2.values
    y_part = np.sum(law.probs * d * d, axis=1)
    diff = d[:, None, :] - d[:, :, None]          # diff[i, x, y] = d[i, y] - d[i, x]
    znorm_sq = np.einsum("ixy,xy->ix", diff * diff, model.rate_matrix)
    znorm_sq = znorm_sq * np.asarray(model.rate_scale(law.grid)).reshape(-1, 1)
    z_part = np.sum(law.probs * znorm_sq, axis=1)
    total = np.trapezoid(y_part + z_part, law.grid)
    return float(max(total, 0.0))


def sample_z_field(rng: np.random.Generator, model: MarkovModel, t: float, x: int,
                   target_norm: float) -> tuple[np.ndarray, float]:
    """Random z-field with ``z[x] = 0`` scaled to the requested norm.

    Returns ``(values, achieved_norm)``; the norm is zero when the state
    has no outgoing rates.
    """
    raw = rng.standard_normal(model.n_states)
    raw[x] = 0.0
    base = z_norm(model, t, x, raw)
    if base == 0.0 or target_norm == 0.0:
        return np.zeros(model.n_states), 0.0
    vals = raw * (target_norm / base)
    return vals, target_norm


def _sample_points(rng, model, n, radius):
    ts = rng.uniform(0.0, model.horizon, size=n)
    xs = rng.integers(0, model.n_states, size=n)
    ys = rng.uniform(-radius, radius, size=n)
    zn = rng.uniform(0.0, radius, size=n)
    zs = np.empty((n, model.n_states))
    norms = np.empty(n)
    for i in range(n):
        zs[i], norms[i] = sample_z_field(rng, model, float(ts[i]), int(xs[i]), float(zn[i]))
    return ts, xs, ys, zs, norms


def growth_margin(model: MarkovModel, driver: Driver, samples: int = 10_000,
                  seed: int = 0, radius: float | None = None,
                  scale: float | None = None) -> float:
    """Max of ``|f| / (scale (1 + |y|^p + ||z||^p))`` over random samples.

    Values at most 1 mean the declared growth bound held on the sample.
    Sampling is confined to the driver's declared validity ball when one
    is set.
    """
    if radius is None:
        radius = driver.growth_ball if driver.growth_ball is not None else 10.0
    lam = driver.growth_scale if scale is None else scale
    p = driver.growth_exponent
    rng = np.random.default_rng(seed)
    ts, xs, ys, zs, norms = _sample_points(rng, model, samples, radius)
    worst = 0.0
    for x in range(model.n_states):
        sel = xs == x
        if not np.any(sel):
            continue
        vals = np.asarray(driver(ts[sel], x, ys[sel], zs[sel], norms[sel]), dtype=float)
        bound = lam * (1.0 + np.abs(ys[sel]) ** p + norms[sel] ** p)
        worst = max(worst, float(np.max(np.abs(vals) / bound)))
    return worst


def lipschitz_quotient(model: MarkovModel, driver: Driver, radius: float,
                       samples: int = 2_000, seed: int = 0) -> float:
    """Largest sampled difference quotient of the driver on the radius ball.

    Half the pairs are independent draws, half are small perturbations of
    one draw; the latter pick up the local (derivative-scale) quotients
    that dominate for smooth drivers.
    """
    rng = np.random.default_rng(seed)
    ts, xs, ys, zs, norms = _sample_points(rng, model, samples, radius)
    eps = 1e-4 * radius
    ys2 = np.empty_like(ys)
    zs2 = np.empty_like(zs)
    norms2 = np.empty_like(norms)
    half = samples // 2
    for i in range(samples):
        if i < half:
            # independent partner at the same evaluation point
            ys2[i] = rng.uniform(-radius, radius)
            target = rng.uniform(0.0, radius)
        else:
            # nearby partner; local quotients dominate for smooth drivers
            ys2[i] = np.clip(ys[i] + rng.uniform(-eps, eps), -radius, radius)
            target = min(radius, max(0.0, norms[i] + rng.uniform(-eps, eps)))
        zs2[i], norms2[i] = sample_z_field(rng, model, float(ts[i]), int(xs[i]), target)
    worst = 0.0
    for x in range(model.n_states):
        sel = xs == x
        if not np.any(sel):
            continue
        v1 = np.asarray(driver(ts[sel], x, ys[sel], zs[sel], norms[sel]), dtype=float)
        v2 = np.asarray(driver(ts[sel], x, ys2[sel], zs2[sel], norms2[sel]), dtype=float)
        dz = zs[sel] - zs2[sel]
        row = model.rate_matrix[x]
        scale = np.asarray(model.rate_scale(ts[sel]), dtype=float)
        dz_norm = np.sqrt(scale * np.sum(row * dz * dz, axis=1))
        gap = np.abs(ys[sel] - ys2[sel]) + dz_norm
        ok = gap > 1e-9
        if np.any(ok):
            worst = max(worst, float(np.max(np.abs(v1 - v2)[ok] / gap[ok])))
    return worst
