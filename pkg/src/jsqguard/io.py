"""Result writers: versioned CSV with '#'-prefixed provenance headers, or a
single JSON document.  Row order follows grid order / sweep order, floats
are written with repr (shortest round-trip), so reruns are byte-identical
once the timestamp line is suppressed.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any, Iterable

import numpy as np

from .model import Grid, SystemParams
from .reliability import SolverConfig

CSV_SCHEMA_VERSION = "jsqguard-csv v1"


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def provenance_pairs(params: SystemParams | None = None, grid: Grid | None = None,
                     solver: SolverConfig | None = None, seed: int | None = None,
                     extra: dict[str, Any] | None = None,
                     timestamp: bool = True) -> list[tuple[str, Any]]:
    """Key/value provenance lines stamped into every output header."""
    pairs: list[tuple[str, Any]] = []
    if timestamp:
        pairs.append(("generated", datetime.now(timezone.utc).isoformat()))
    if params is not None:
        pairs += [
            ("n", params.n), ("lam", params.lam), ("mu", params.mu),
            ("gamma", params.gamma), ("fault_prob", params.fault_prob),
            ("routing_probs", ",".join(repr(p) for p in params.routing_probs)),
            ("protect_cost", params.protect_cost),
            ("attack_cost", params.attack_cost),
        ]
    if grid is not None:
        pairs += [("bound", grid.bound), ("boundary_margin", grid.boundary_margin)]
    if solver is not None:
        pairs += [
            ("epsilon", solver.epsilon),
            ("max_iterations", solver.max_iterations),
            ("update_scheme", solver.update_scheme or "default"),
            ("stability_constrained", solver.stability_constrained),
        ]
    if seed is not None:
        pairs.append(("seed", seed))
    if extra:
        pairs += list(extra.items())
    return pairs


def write_csv(path, columns: Iterable[str], rows: Iterable[Iterable[Any]],
              provenance: list[tuple[str, Any]]) -> None:
    lines = [f"# {CSV_SCHEMA_VERSION}"]
    lines += [f"# {key}={_fmt(value)}" for key, value in provenance]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, payload: dict[str, Any],
               provenance: list[tuple[str, Any]]) -> None:
    doc = {"schema": CSV_SCHEMA_VERSION, "provenance": dict(provenance)}
    doc.update(payload)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def write_trajectory_csv(path, trajectory, provenance: list[tuple[str, Any]],
                         stride: int = 1) -> None:
    """Dump an event log (optionally subsampled by `stride`): time, event
    kind, 1-based queue, and the state after the event."""
    from .sim import KIND_NAMES

    n = len(trajectory.initial_state.lengths)
    columns = ["time", "kind", "queue"] + [f"x{i+1}" for i in range(n)]
    rows = []
    for k in range(0, len(trajectory.times), stride):
        rows.append([trajectory.times[k], KIND_NAMES[int(trajectory.kinds[k])],
                     int(trajectory.queues[k])] + list(trajectory.states[k]))
    write_csv(path, columns, rows, provenance)


def read_policy_csv(path, grid: Grid, column: str = "b") -> np.ndarray:
    """Load a per-state probability table written by write_csv
    (columns x1..xn plus `column`)."""
    probs = np.full(grid.size, np.nan)
    with open(path, encoding="utf-8") as fh:
        header: list[str] | None = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                cols = {name: k for k, name in enumerate(header)}
                missing = [c for c in [column] + [f"x{i+1}" for i in range(grid.n)]
                           if c not in cols]
                if missing:
                    raise ValueError(f"policy file missing columns: {missing}")
                continue
            parts = line.split(",")
            lengths = tuple(int(parts[cols[f"x{i+1}"]]) for i in range(grid.n))
            probs[grid.index_of(lengths)] = float(parts[cols[column]])
    if np.isnan(probs).any():
        raise ValueError("policy file does not cover every grid state")
    return probs
