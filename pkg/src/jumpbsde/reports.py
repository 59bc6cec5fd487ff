"""Report files: CSV and JSON writers with config fingerprints.

All files are written atomically (temp file plus rename), use ``.``
decimals, ``,`` separators, a header row and LF line endings, and carry
no timestamps, so identical configs reproduce identical bytes.  The
fingerprint is a stable hash of the canonicalized config embedded in
every output.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .bsde import ValueField
from .estimates import BoundCheck, StabilityReport
from .markov import MarkovModel, Trajectory
from .montecarlo import ResidualStats
from .picard import PicardDiagnostics
from .truncation import CascadeDiagnostics

__all__ = [
    "config_fingerprint",
    "atomic_write_text",
    "fmt",
    "write_csv",
    "write_json",
    "write_value_field",
    "read_value_field",
    "write_trajectories",
    "write_picard_diagnostics",
    "write_cascade_diagnostics",
    "write_bound_checks",
    "write_stability_report",
    "write_residual_stats",
    "write_pricing",
]


def config_fingerprint(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence],
              fingerprint: str | None = None) -> None:
    lines = []
    if fingerprint is not None:
        lines.append(f"# fingerprint={fingerprint}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, payload: dict, fingerprint: str | None = None) -> None:
    body = dict(payload)
    if fingerprint is not None:
        body["fingerprint"] = fingerprint
    atomic_write_text(path, json.dumps(body, sort_keys=True, indent=2) + "\n")


def write_value_field(path: str, model: MarkovModel, u: ValueField,
                      fingerprint: str | None = None) -> None:
    rows = ((fmt(t), model.states[x], fmt(u.values[i, x]))
            for i, t in enumerate(u.grid) for x in range(u.n_states))
    write_csv(path, ["time", "state", "u"], rows, fingerprint)


def read_value_field(path: str, model: MarkovModel) -> ValueField:
    """Load a field written by :func:`write_value_field`."""
    times: list[float] = []
    per_time: dict[float, dict[int, float]] = {}
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("time,"):
                continue
            t_str, state, val = line.split(",")
            t = float(t_str)
            if t not in per_time:
                per_time[t] = {}
                times.append(t)
            per_time[t][model.index(_parse_label(state))] = float(val)
    grid = np.array(sorted(times))
    values = np.array([[per_time[t][x] for x in range(model.n_states)] for t in grid])
    return ValueField(grid=grid, values=values)


def _parse_label(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def write_trajectories(path: str, model: MarkovModel, trajs: Sequence[Trajectory],
                       fingerprint: str | None = None) -> None:
    def rows():
        for pid, traj in enumerate(trajs):
            prev = traj.x0
            for j, (t, s) in enumerate(zip(traj.times, traj.states)):
                yield (pid, j, fmt(float(t)), model.states[prev], model.states[int(s)])
                prev = int(s)

    write_csv(path, ["path_id", "jump_index", "time", "from_state", "to_state"],
              rows(), fingerprint)


def write_picard_diagnostics(path: str, diag: PicardDiagnostics,
                             fingerprint: str | None = None) -> None:
    rows = []
    for k, d in enumerate(diag.distances):
        ratio = diag.contraction_ratios[k - 1] if k >= 1 else ""
        rows.append((k, fmt(d), fmt(ratio) if ratio != "" else ""))
    write_csv(path, ["iteration", "sq_b_distance", "contraction_ratio"], rows, fingerprint)


def write_cascade_diagnostics(path: str, diag: CascadeDiagnostics,
                              fingerprint: str | None = None) -> None:
    checks = {c.radius: c for c in diag.lipschitz_checks}
    rows = []
    for r_idx, radius in enumerate(diag.radii):
        dist = diag.cauchy_distances[r_idx - 1] if r_idx >= 1 else ""
        check = checks.get(radius)
        for s_idx, iters in enumerate(diag.picard_iterations[r_idx]):
            rows.append((
                fmt(radius), s_idx, iters,
                fmt(dist) if dist != "" else "",
                fmt(check.estimate) if check else "",
                fmt(check.admissible) if check and check.admissible is not None else "",
            ))
    write_csv(path, ["radius", "subinterval", "picard_iters",
                     "sq_b_distance_to_previous_radius", "L_estimate", "L_bound"],
              rows, fingerprint)


def write_bound_checks(path: str, checks: Sequence[BoundCheck],
                       fingerprint: str | None = None) -> None:
    if path.endswith(".csv"):
        rows = ((c.bound_name, json.dumps(c.formula_inputs, sort_keys=True).replace(",", ";"),
                 fmt(c.bound_value), fmt(c.measured_value), fmt(c.passed))
                for c in checks)
        write_csv(path, ["bound_name", "formula_inputs", "bound_value",
                         "measured_value", "pass"], rows, fingerprint)
    else:
        write_json(path, {"checks": [c.as_record() for c in checks]}, fingerprint)


def write_stability_report(path: str, report: StabilityReport,
                           fingerprint: str | None = None) -> None:
    rows = ((run.label, fmt(run.measured_sq_distance), fmt(run.predicted_bound),
             fmt(run.seminorm), fmt(run.terminal_gap_sq), fmt(run.dominated))
            for run in report.runs)
    write_csv(path, ["label", "sq_b_distance", "predicted_bound", "seminorm",
                     "terminal_gap_sq", "dominated"], rows, fingerprint)


def write_residual_stats(path: str, stats: ResidualStats,
                         fingerprint: str | None = None) -> None:
    write_json(path, stats.as_record(), fingerprint)


def write_pricing(path: str, model: MarkovModel, value: ValueField,
                  strategy: np.ndarray, fingerprint: str | None = None) -> None:
    K = model.n_states
    off_diag = ~np.eye(K, dtype=bool)

    def rows():
        for i, t in enumerate(value.grid):
            for x in range(K):
                pis = strategy[i, x][off_diag[x]]
                lo = float(np.min(pis)) if pis.size else 0.0
                hi = float(np.max(pis)) if pis.size else 0.0
                yield (fmt(float(t)), model.states[x], fmt(value.values[i, x]),
                       fmt(lo), fmt(hi))

    write_csv(path, ["time", "state", "price", "min_strategy", "max_strategy"],
              rows(), fingerprint)
