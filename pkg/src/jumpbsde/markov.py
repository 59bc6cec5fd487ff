"""Finite-state jump Markov models.

A model is a finite state set with a constant nonnegative rate matrix,
optionally modulated in time by a positive scalar factor.  The module
provides exact trajectory simulation (competing exponentials, with
thinning against a constant majorant when modulation is present),
marginal laws via the forward Kolmogorov ODE system, and integrals of
state fields against the jump counting measure and its compensator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Modulation",
    "MarkovModel",
    "Trajectory",
    "MarginalLaw",
    "simulate_path",
    "simulate_batch",
    "path_seed",
    "marginal_law",
    "marginal_law_from",
    "compensated_integral",
]


@dataclass(frozen=True)
class Modulation:
    """Positive scalar time factor applied to a constant rate matrix.

    ``fn`` must accept scalar or ndarray time arguments.  ``sup`` is an
    upper bound of ``fn`` on the model horizon; it is the thinning
    majorant used by the exact path simulator.
    """

    fn: Callable[[float | np.ndarray], float | np.ndarray]
    sup: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.sup > 0.0:
            raise ValueError("modulation sup must be positive")

    @staticmethod
    def from_config(cfg: dict, horizon: float) -> "Modulation":
        name = cfg.get("name")
        if name == "constant":
            value = float(cfg["value"])
            if value <= 0.0:
                raise ValueError("constant modulation value must be positive")
            return Modulation(fn=lambda t, v=value: v + 0.0 * np.asarray(t), sup=value, name=name, params={"value": value})
        if name == "cosine":
            base = float(cfg.get("base", 1.0))
            amp = float(cfg["amplitude"])
            freq = float(cfg["frequency"])
            if base - abs(amp) <= 0.0:
                raise ValueError("cosine modulation must stay positive: base > |amplitude|")
            fn = lambda t, b=base, a=amp, w=freq: b + a * np.cos(w * np.asarray(t))
            return Modulation(fn=fn, sup=base + abs(amp), name=name, params={"base": base, "amplitude": amp, "frequency": freq})
        raise ValueError(f"unknown modulation family: {name!r}")


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Finite state set, constant rate matrix, horizon, optional modulation.

    ``rate_matrix[x, y]`` is the jump rate from state ``x`` to ``y``; the
    diagonal must be zero and every entry nonnegative.  The total exit
    rate is bounded by construction, so the process never explodes.
    """

    states: tuple
    rate_matrix: np.ndarray
    horizon: float
    modulation: Modulation | None = None

    def __post_init__(self) -> None:
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        mat = np.array(self.rate_matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("rate matrix must be square")
        if len(states) != mat.shape[0]:
            raise ValueError("state count does not match rate matrix size")
        if len(set(states)) != len(states):
            raise ValueError("state labels must be distinct")
        if not np.all(np.isfinite(mat)):
            raise ValueError("rates must be finite")
        if np.any(mat < 0.0):
            raise ValueError("rates must be nonnegative")
        if np.any(np.diagonal(mat) != 0.0):
            raise ValueError("rate to the current state must be zero")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        mat.setflags(write=False)
        object.__setattr__(self, "rate_matrix", mat)
        row_sums = mat.sum(axis=1)
        row_sums.setflags(write=False)
        object.__setattr__(self, "_row_sums", row_sums)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(states)})

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        """Resolve a state label or integer index to an index."""
        if isinstance(state, (int, np.integer)) and state not in self._index:
            if 0 <= int(state) < self.n_states:
                return int(state)
            raise ValueError(f"unknown state: {state!r}")
        try:
            return self._index[state]
        except KeyError:
            raise ValueError(f"unknown state: {state!r}") from None

    def rate_scale(self, t):
        """Time modulation factor, vectorized over ``t``."""
        if self.modulation is None:
            return 1.0 if np.isscalar(t) else np.ones_like(np.asarray(t, dtype=float))
        return self.modulation.fn(t)

    def rates_row(self, t: float, x) -> np.ndarray:
        """Jump rates out of state ``x`` at time ``t``."""
        return self.rate_scale(t) * self.rate_matrix[self.index(x)]

    def total_rate(self, t: float, x) -> float:
        """Total exit rate from ``x`` at ``t`` (sum of off-diagonal rates)."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return float(self.rate_scale(t) * self._row_sums[self.index(x)])

    def grid(self, steps: int, t0: float = 0.0) -> np.ndarray:
        """Uniform time grid with ``steps`` intervals from ``t0`` to the horizon."""
        if steps < 1:
            raise ValueError("grid needs at least one step")
        if not 0.0 <= t0 < self.horizon:
            raise ValueError("t0 must lie in [0, horizon)")
        return np.linspace(t0, self.horizon, steps + 1)

    @staticmethod
    def from_config(cfg: dict) -> "MarkovModel":
        states = tuple(cfg["states"])
        rates = np.array(cfg["rates"], dtype=float)
        horizon = float(cfg["horizon"])
        mod = None
        if cfg.get("modulation") is not None:
            mod = Modulation.from_config(cfg["modulation"], horizon)
        return MarkovModel(states=states, rate_matrix=rates, horizon=horizon, modulation=mod)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated path: start point plus the ordered jump record.

    The state path is piecewise constant and right continuous; it is
    fully recoverable from ``(t0, x0)`` and the jump sequence.
    """

    t0: float
    x0: int
    times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=np.int64)
        if times.shape != states.shape or times.ndim != 1:
            raise ValueError("jump times and states must be 1-d and of equal length")
        if times.size:
            if not np.all(np.diff(times) > 0.0):
                raise ValueError("jump times must be strictly increasing")
            if times[0] <= self.t0 or times[-1] > self.horizon:
                raise ValueError("jump times must lie in (t0, horizon]")
            prev = np.concatenate(([self.x0], states[:-1]))
            if np.any(prev == states):
                raise ValueError("post-jump state must differ from pre-jump state")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def state_at(self, t: float) -> int:
        """State occupied at time ``t`` (right-continuous convention)."""
        if not self.t0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [{self.t0}, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.x0 if k == 0 else int(self.states[k - 1])

    def segments(self) -> list[tuple[float, float, int]]:
        """Constant-state intervals ``(a, b, state)`` covering [t0, horizon]."""
        edges = np.concatenate(([self.t0], self.times, [self.horizon]))
        occupied = np.concatenate(([self.x0], self.states))
        out = []
        for i in range(occupied.size):
            a, b = float(edges[i]), float(edges[i + 1])
            if b > a:
                out.append((a, b, int(occupied[i])))
        return out


def path_seed(master_seed: int, path_index: int) -> np.random.SeedSequence:
    """Per-path seed derived from a master seed by a counter key.

    The derivation depends only on ``(master_seed, path_index)``, so
    batch results are independent of execution order and thread count.
    """
    return np.random.SeedSequence([int(master_seed), int(path_index)])


def simulate_path(model: MarkovModel, t0: float, x0, seed) -> Trajectory:
    """Simulate one exact trajectory on ``[t0, horizon]``.

    Time-homogeneous models use competing exponential clocks; modulated
    models thin candidate jumps against the constant majorant
    ``sup(m) * total_rate``.  Deterministic given ``(model, t0, x0, seed)``.
    """
    if not 0.0 <= t0 < model.horizon:
        raise ValueError("t0 must lie in [0, horizon)")
    x = model.index(x0)
    rng = np.random.default_rng(seed)
    sup_m = model.modulation.sup if model.modulation is not None else 1.0
    mat = model.rate_matrix
    jump_times: list[float] = []
    jump_states: list[int] = []
    t = t0
    while True:
        lam = float(model._row_sums[x])
        majorant = lam * sup_m
        if majorant <= 0.0:
            break
        t += rng.exponential(1.0 / majorant)
        if t > model.horizon:
            break
        if model.modulation is not None:
            if rng.random() >= float(model.modulation.fn(t)) / sup_m:
                continue
        u = rng.random()
        cdf = np.cumsum(mat[x]) / lam
        x = min(int(np.searchsorted(cdf, u, side="right")), model.n_states - 1)
        jump_times.append(t)
        jump_states.append(x)
    return Trajectory(t0=t0, x0=model.index(x0), times=np.array(jump_times),
                      states=np.array(jump_states, dtype=np.int64), horizon=model.horizon)


def simulate_batch(model: MarkovModel, t0: float, x0, n_paths: int, master_seed: int,
                   threads: int = 1) -> list[Trajectory]:
    """Simulate ``n_paths`` trajectories with per-path derived seeds.

    Results are indexed by path and do not depend on the thread count.
    """
    def one(i: int) -> Trajectory:
        return simulate_path(model, t0, x0, path_seed(master_seed, i))

    if threads <= 1:
        return [one(i) for i in range(n_paths)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n_paths)))


@dataclass(frozen=True, eq=False)
class MarginalLaw:
    """Distribution of the chain at each point of a time grid."""

    grid: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=float)
        probs = np.array(self.probs, dtype=float)
        if grid.ndim != 1 or probs.ndim != 2 or probs.shape[0] != grid.size:
            raise ValueError("probs must have one row per grid point")
        if not np.all(np.diff(grid) > 0.0):
            raise ValueError("grid must be strictly increasing")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each probability row must sum to 1 within 1e-12")
        grid.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "probs", probs)

    def at_time(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.grid, t))
        if idx >= self.grid.size or self.grid[idx] != t:
            raise ValueError(f"time {t} is not a grid point")
        return self.probs[idx]

    def restrict(self, i0: int, i1: int) -> "MarginalLaw":
        """Sub-law on the grid slice ``[i0, i1]`` (inclusive)."""
        return MarginalLaw(grid=self.grid[i0:i1 + 1], probs=self.probs[i0:i1 + 1])


def _forward_rhs(model: MarkovModel, t: float, p: np.ndarray) -> np.ndarray:
    # dp[y]/dt = sum_x p[x] rates(t,x,y) - p[y] total_rate(t,y)
    scale = float(model.rate_scale(t))
    return scale * (model.rate_matrix.T @ p - model._row_sums * p)


def marginal_law_from(model: MarkovModel, p0: Sequence[float], grid: np.ndarray) -> MarginalLaw:
    """Propagate an initial distribution through the forward Kolmogorov system.

    Uses the same fixed-step classical RK4 integrator as the backward
    sweeps; rows are clamped at zero and renormalized to sum exactly 1.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or not np.all(np.diff(grid) > 0.0):
        raise ValueError("grid must be strictly increasing with at least two points")
    p = np.array(p0, dtype=float)
    if p.shape != (model.n_states,):
        raise ValueError("initial distribution has wrong length")
    if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0.0):
        raise ValueError("initial distribution must be a probability vector")
    out = np.empty((grid.size, model.n_states))
    out[0] = p
    for i in range(grid.size - 1):
        t, h = grid[i], grid[i + 1] - grid[i]
        k1 = _forward_rhs(model, t, p)
        k2 = _forward_rhs(model, t + 0.5 * h, p + 0.5 * h * k1)
        k3 = _forward_rhs(model, t + 0.5 * h, p + 0.5 * h * k2)
        k4 = _forward_rhs(model, t + h, p + h * k3)
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(p < -1e-12):
            raise RuntimeError("forward solve produced a significantly negative probability")
        p = np.maximum(p, 0.0)
        p /= p.sum()
        out[i + 1] = p
    return MarginalLaw(grid=grid, probs=out)


def marginal_law(model: MarkovModel, t0: float, x0, grid: np.ndarray) -> MarginalLaw:
    """Marginal law of the chain started at ``(t0, x0)`` on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if not math.isclose(grid[0], t0, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("grid must start at t0")
    if not math.isclose(grid[-1], model.horizon, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("grid must end at the model horizon")
    p0 = np.zeros(model.n_states)
    p0[model.index(x0)] = 1.0
    return marginal_law_from(model, p0, grid)


def uniform_start_law(model: MarkovModel, grid: np.ndarray) -> MarginalLaw:
    """Law seeded from the uniform state mix; dominates every point start."""
    p0 = np.full(model.n_states, 1.0 / model.n_states)
    return marginal_law_from(model, p0, grid)


def _simpson_segment(model: MarkovModel, zfield, a: float, b: float, x: int,
                     max_step: float) -> float:
    """Composite Simpson value of ``sum_y z(., x, y) rates(., x, y)`` on [a, b]."""
    n_panels = max(1, int(math.ceil((b - a) / max_step)))
    edges = np.linspace(a, b, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])

    def weighted(ts: np.ndarray) -> np.ndarray:
        total = np.zeros_like(ts)
        row = model.rate_matrix[x]
        for y in range(model.n_states):
            if row[y] == 0.0:
                continue
            vals = np.broadcast_to(np.asarray(zfield(ts, x, y), dtype=float), ts.shape)
            total = total + row[y] * vals
        return np.asarray(model.rate_scale(ts)) * total

    fe = weighted(edges)
    fm = weighted(mids)
    widths = np.diff(edges)
    return float(np.sum((widths / 6.0) * (fe[:-1] + 4.0 * fm + fe[1:])))


def compensated_integral(model: MarkovModel, traj: Trajectory, zfield,
                         max_step: float | None = None) -> float:
    """Integral of ``zfield`` against the compensated jump measure.

    ``zfield(t, x, y)`` must be evaluable on the path's time range and
    vectorized over ``t``.  The jump part sums ``z`` over the recorded
    marks; the compensator part is integrated exactly on the constant
    inter-jump segments by composite Simpson with panel width at most
    ``max_step`` (default: span / 256).
    """
    if max_step is None:
        max_step = (traj.horizon - traj.t0) / 256.0
    if max_step <= 0.0:
        raise ValueError("max_step must be positive")
    jump_part = 0.0
    prev = traj.x0
    for t, s in zip(traj.times, traj.states):
        val = zfield(np.asarray([t]), prev, int(s))
        jump_part += float(np.asarray(val).reshape(-1)[0])
        prev = int(s)
    comp = math.fsum(_simpson_segment(model, zfield, a, b, x, max_step)
                     for a, b, x in traj.segments())
    return jump_part - comp
