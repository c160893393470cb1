"""Command-line front end: parse experiment configurations, dispatch the
solvers / simulator / stability checks, and emit machine-readable tables.

Subcommands: check-stability, solve-reliability, solve-security, simulate,
regime-sweep, tipping-points.  Exit codes: 0 success, 2 configuration error,
3 solver non-convergence, 4 I/O error.  Flags override environment variables
(prefix JSQGUARD_, e.g. JSQGUARD_SEED), which override the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

from .engine import active_engine
from .io import provenance_pairs, read_policy_csv, write_csv, write_json
from .model import (
    AttackStrategy,
    Grid,
    ProtectPolicy,
    SystemParams,
    successor_tables,
)
from .reliability import (
    SolverConfig,
    delta_map,
    tipping_point_sweep,
    truncated_policy_iteration,
    value_iteration,
)
from .security import RiskLabel, regime_sweep, shapley_iteration
from .sim import SimConfig, estimate_metrics
from .stability import (
    attack_ceiling_map,
    certify_policy,
    drift_coefficients,
    protect_floor_map,
    unprotected_stability,
)

ENV_PREFIX = "JSQGUARD_"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

POLICY_KEYWORDS = ("optimal", "always-protect", "never-protect")


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model + grid + solver controls, optional simulation
    block, sweep lists, and policy/attack references."""

    params: SystemParams
    grid: Grid
    solver: SolverConfig
    sim: SimConfig | None = None
    method: str = "tpi"
    policy: str = "optimal"
    policies: tuple[str, ...] = ("optimal", "always-protect", "never-protect")
    attack: str | None = None
    a_values: tuple[float, ...] = ()
    ca_values: tuple[float, ...] = ()
    cb_values: tuple[float, ...] = ()
    x0: tuple[int, ...] | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if self.method not in ("vi", "tpi"):
            raise ConfigError("method must be 'vi' or 'tpi'")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if self.grid.n != self.params.n:
            raise ConfigError("grid.n must match params.n")


def _strict(data: dict, allowed: set[str], what: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {what}: {unknown}")


def _build(cls, data: dict, what: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    _strict(data, fields, what)
    for key in ("routing_probs", "tie_weights"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("experiment config must be a JSON object")
    data = dict(data)
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    _strict(data, allowed, "experiment config")
    if "params" not in data or "grid" not in data:
        raise ConfigError("experiment config needs 'params' and 'grid'")
    params = _build(SystemParams, dict(data.pop("params")), "params")
    grid = _build(Grid, dict(data.pop("grid")), "grid")
    solver = _build(SolverConfig, dict(data.pop("solver", {})), "solver")
    sim_data = data.pop("sim", None)
    sim = _build(SimConfig, dict(sim_data), "sim") if sim_data is not None else None
    for key in ("a_values", "ca_values", "cb_values"):
        if key in data:
            data[key] = tuple(float(v) for v in data[key])
    if data.get("x0") is not None:
        data["x0"] = tuple(int(v) for v in data["x0"])
    if "policies" in data:
        data["policies"] = tuple(data["policies"])
    try:
        return ExperimentConfig(params=params, grid=grid, solver=solver, sim=sim, **data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    params = dataclasses.asdict(cfg.params)
    params["routing_probs"] = list(cfg.params.routing_probs)
    sim = None
    if cfg.sim is not None:
        sim = dataclasses.asdict(cfg.sim)
        if cfg.sim.tie_weights is not None:
            sim["tie_weights"] = list(cfg.sim.tie_weights)
    return {
        "params": params,
        "grid": dataclasses.asdict(cfg.grid),
        "solver": dataclasses.asdict(cfg.solver),
        "sim": sim,
        "method": cfg.method,
        "policy": cfg.policy,
        "policies": list(cfg.policies),
        "attack": cfg.attack,
        "a_values": list(cfg.a_values),
        "ca_values": list(cfg.ca_values),
        "cb_values": list(cfg.cb_values),
        "x0": list(cfg.x0) if cfg.x0 is not None else None,
        "format": cfg.format,
    }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def _solve_reliability(cfg: ExperimentConfig):
    solve = value_iteration if cfg.method == "vi" else truncated_policy_iteration
    report = solve(cfg.params, cfg.grid, cfg.solver)
    if not report.converged:
        raise NonConvergence(
            f"{cfg.method} did not converge within {cfg.solver.max_iterations} "
            f"sweeps (residual {report.residual:.3e})")
    return report

def _resolve_policy(name: str, cfg: ExperimentConfig,
                    params: SystemParams | None = None) -> ProtectPolicy:
    params = params or cfg.params
    if name == "optimal":
        sub = dataclasses.replace(cfg, params=params)
        return _solve_reliability(sub).policy
    if name == "always-protect":
        return ProtectPolicy.always(cfg.grid)
    if name == "never-protect":
        return ProtectPolicy.never(cfg.grid)
    return ProtectPolicy(cfg.grid, read_policy_csv(name, cfg.grid))


def _resolve_attack(cfg: ExperimentConfig) -> AttackStrategy | None:
    if cfg.attack in (None, "none"):
        return None
    if cfg.attack == "equilibrium":
        report = shapley_iteration(cfg.params, cfg.grid, cfg.solver)
        if not report.converged:
            raise NonConvergence("equilibrium solve did not converge")
        return report.attack
    return AttackStrategy(cfg.grid, read_policy_csv(cfg.attack, cfg.grid, column="a"))


def _state_columns(n: int) -> list[str]:
    return [f"x{i+1}" for i in range(n)]


def _emit(out, fmt, columns, rows, prov, extra_payload=None):
    if fmt == "json":
        payload = {"columns": list(columns),
                   "rows": [dict(zip(columns, row)) for row in rows]}
        if extra_payload:
            payload.update(extra_payload)
        write_json(out, payload, prov)
    else:
        write_csv(out, columns, rows, prov)


def cmd_check_stability(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    params, grid = cfg.params, cfg.grid
    verdict = unprotected_stability(params)
    policy = _resolve_policy(cfg.policy, cfg)
    floors = protect_floor_map(params, grid)
    ceilings = attack_ceiling_map(params, grid)
    coeff = drift_coefficients(params, grid, policy)
    report = certify_policy(params, grid, policy)
    states = successor_tables(grid).states
    columns = _state_columns(grid.n) + ["protect_floor", "attack_ceiling", "b", "drift_coefficient"]
    rows = [list(states[s]) + [floors[s], ceilings[s], policy.probs[s], coeff[s]]
            for s in range(grid.size)]
    extra = {
        "engine": active_engine(),
        "policy": cfg.policy,
        "unprotected_stable": verdict.stable,
        "unprotected_reason": verdict.reason.value,
        "unprotected_mean_bound": verdict.mean_bound if verdict.mean_bound is not None else "",
        "certificate_c": report.c,
        "certificate_d": report.d,
        "certificate_mean_bound": report.mean_bound,
        "certified": report.stable_certificate,
        "witness": "" if report.witness is None else " ".join(map(str, report.witness.lengths)),
    }
    prov = provenance_pairs(params, grid, cfg.solver, seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    return EXIT_OK


def cmd_solve_reliability(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    report = _solve_reliability(cfg)
    d, valid = delta_map(report.value, cfg.params)
    states = successor_tables(cfg.grid).states
    columns = _state_columns(cfg.grid.n) + ["b", "value", "delta", "delta_valid"]
    rows = [list(states[s]) + [report.policy.probs[s], report.value.values[s],
                               d[s], bool(valid[s])]
            for s in range(cfg.grid.size)]
    extra = {
        "engine": active_engine(),
        "method": cfg.method,
        "iterations": report.iterations,
        "residual": report.residual,
        "converged": report.converged,
    }
    prov = provenance_pairs(cfg.params, cfg.grid, cfg.solver, seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    return EXIT_OK


def cmd_solve_security(cfg: ExperimentConfig, out, timestamp: bool, seed,
                       with_regimes: bool) -> int:
    report = shapley_iteration(cfg.params, cfg.grid, cfg.solver)
    if not report.converged:
        raise NonConvergence(
            f"equilibrium solve did not converge (residual {report.residual:.3e})")
    states = successor_tables(cfg.grid).states
    columns = _state_columns(cfg.grid.n) + ["attack_prob", "protect_prob", "label", "delta"]
    rows = [list(states[s]) + [report.attack.probs[s], report.protect.probs[s],
                               RiskLabel(int(report.labels[s])).name, report.delta[s]]
            for s in range(cfg.grid.size)]
    extra = {
        "engine": active_engine(),
        "iterations": report.iterations,
        "residual": report.residual,
        "converged": report.converged,
    }
    prov = provenance_pairs(cfg.params, cfg.grid, cfg.solver, seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    if with_regimes:
        if not cfg.ca_values or not cfg.cb_values:
            raise ConfigError("--regime-sweep needs ca_values and cb_values")
        stem, dot, ext = str(out).rpartition(".")
        regime_out = f"{stem}_regimes{dot}{ext}" if dot else f"{out}_regimes"
        return _write_regimes(cfg, regime_out, timestamp, seed)
    return EXIT_OK


def _write_regimes(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    result = regime_sweep(cfg.params, cfg.grid, cfg.solver, cfg.ca_values, cfg.cb_values)
    columns = ["c_a", "c_b", "regime", "converged"]
    rows = [[ca, cb, result.regimes[ia, ic], bool(result.converged[ia, ic])]
            for ia, ca in enumerate(result.ca_values)
            for ic, cb in enumerate(result.cb_values)]
    extra = {
        "engine": active_engine(),
        "consistency_violations": "; ".join(result.consistency_violations) or "none",
    }
    prov = provenance_pairs(cfg.params, cfg.grid, cfg.solver, seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    return EXIT_OK


def cmd_regime_sweep(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    if not cfg.ca_values or not cfg.cb_values:
        raise ConfigError("regime-sweep needs non-empty ca_values and cb_values")
    return _write_regimes(cfg, out, timestamp, seed)


def cmd_tipping_points(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    if not cfg.a_values or not cfg.cb_values:
        raise ConfigError("tipping-points needs non-empty a_values and cb_values")
    result = tipping_point_sweep(cfg.params, cfg.grid, cfg.solver,
                                 cfg.a_values, cfg.cb_values)
    columns = ["a", "c_b", "protects_somewhere", "converged"]
    rows = [[a, cb, bool(result.protects[ia, ic]), bool(result.converged[ia, ic])]
            for ia, a in enumerate(result.a_values)
            for ic, cb in enumerate(result.cb_values)]
    extra = {
        "engine": active_engine(),
        "monotonicity_violations":
            "; ".join(f"a={a} c_b={cb}: {msg}" for a, cb, msg in
                      result.monotonicity_violations) or "none",
    }
    prov = provenance_pairs(cfg.params, cfg.grid, cfg.solver, seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, out, timestamp: bool, seed) -> int:
    if cfg.sim is None:
        raise ConfigError("simulate needs a 'sim' block in the config")
    sim = cfg.sim if seed is None else dataclasses.replace(cfg.sim, seed=seed)
    attack = _resolve_attack(cfg)
    sweep = cfg.a_values or (cfg.params.fault_prob,)
    columns = ["a", "policy", "cost_mean", "cost_half_width", "normalized",
               "degenerate", "mean_queue", "mean_queue_half_width",
               "replications"]
    rows = []
    for a in sweep:
        cell = dataclasses.replace(cfg.params, fault_prob=a)
        metrics = {}
        for name in cfg.policies:
            policy = _resolve_policy(name, cfg, cell)
            metrics[name] = estimate_metrics(cell, policy, attack, sim, cfg.x0)
        means = [metrics[name][0].mean for name in cfg.policies]
        lo, hi = min(means), max(means)
        degenerate = not hi > lo
        for name in cfg.policies:
            cost, queue = metrics[name]
            normalized = 0.0 if degenerate else (cost.mean - lo) / (hi - lo)
            rows.append([a, name, cost.mean, cost.half_width, normalized,
                         degenerate, queue.mean, queue.half_width,
                         sim.replications])
    extra = {
        "engine": active_engine(),
        "attack": cfg.attack or "none",
        "cost_mode": sim.cost_mode,
        "horizon": sim.horizon,
        "tie_break": sim.tie_break,
    }
    prov = provenance_pairs(cfg.params, cfg.grid, cfg.solver, sim.seed, extra, timestamp)
    _emit(out, cfg.format, columns, rows, prov)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jsqguard",
        description="Solve and simulate protection of shortest-queue routing "
                    "against faulty and adversarial assignments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("check-stability", "stability verdicts, floors/ceilings, drift certificate"),
        ("solve-reliability", "optimal protection policy on the truncated grid"),
        ("solve-security", "attacker-defender equilibrium on the truncated grid"),
        ("simulate", "Monte Carlo policy cost/queue estimates"),
        ("regime-sweep", "risk-regime map over a technological-cost lattice"),
        ("tipping-points", "where protection first becomes worthwhile"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=None,
                       help="output file path (or set JSQGUARD_OUT)")
        p.add_argument("--format", choices=["csv", "json"], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--no-timestamp", action="store_true",
                       help="suppress the timestamp provenance line")
        if name == "solve-reliability":
            p.add_argument("--method", choices=["vi", "tpi"], default=None)
            p.add_argument("--stability-constrained", action="store_true")
        if name == "solve-security":
            p.add_argument("--regime-sweep", action="store_true",
                           help="also emit the cost-lattice regime map")
        if name == "simulate":
            p.add_argument("--policies", default=None,
                           help="comma-separated keywords/paths overriding the config")
            p.add_argument("--attack", default=None,
                           help="none | equilibrium | policy file path")
    return parser


def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        fmt = args.format or _env("FORMAT") or cfg.format
        if fmt not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        cfg = dataclasses.replace(cfg, format=fmt)
        seed = args.seed
        if seed is None and _env("SEED") is not None:
            seed = int(_env("SEED"))
        method = getattr(args, "method", None) or _env("METHOD")
        if method is not None:
            if method not in ("vi", "tpi"):
                raise ConfigError("method must be 'vi' or 'tpi'")
            cfg = dataclasses.replace(cfg, method=method)
        if getattr(args, "stability_constrained", False):
            cfg = dataclasses.replace(
                cfg, solver=dataclasses.replace(cfg.solver, stability_constrained=True))
        if getattr(args, "policies", None):
            cfg = dataclasses.replace(
                cfg, policies=tuple(args.policies.split(",")))
        if getattr(args, "attack", None):
            cfg = dataclasses.replace(cfg, attack=args.attack)
        out = args.out or _env("OUT")
        if not out:
            raise ConfigError("no output path: pass --out or set JSQGUARD_OUT")
        timestamp = not args.no_timestamp

        if args.command == "check-stability":
            return cmd_check_stability(cfg, out, timestamp, seed)
        if args.command == "solve-reliability":
            return cmd_solve_reliability(cfg, out, timestamp, seed)
        if args.command == "solve-security":
            return cmd_solve_security(cfg, out, timestamp, seed,
                                      getattr(args, "regime_sweep", False))
        if args.command == "simulate":
            return cmd_simulate(cfg, out, timestamp, seed)
        if args.command == "regime-sweep":
            return cmd_regime_sweep(cfg, out, timestamp, seed)
        if args.command == "tipping-points":
            return cmd_tipping_points(cfg, out, timestamp, seed)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG if str(getattr(exc, 'filename', '')) == str(args.config) else EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
