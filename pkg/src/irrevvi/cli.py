"""Command-line front end: ``irrevvi <command> --config cfg.json [--out DIR] [--seed N]``.

Exit status: 0 when every asserted invariant holds, 1 when one fails,
2 for configuration or usage errors, 3 when a solver or IO failure aborts the run.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, artifacts, oracles, presets, regularized
from .config import ConfigError, ScenarioConfig, parse_config
from .evolution import (ForcingSampler, TimeGrid, apriori_report, check_admissible_initial,
                        forcing_interpolation_check, run_minimizing_movement)
from .mesh_ops import MeshSpec, SolverError, build_mesh_and_operators, norm, validate_problem
from .obstacle import SolverConfig
from .reports import Report

log = logging.getLogger("irrevvi")

OUT_ENV = "IRREVVI_OUT"
COMMANDS = ("validate", "run", "equilibrium", "longtime", "singular-limit", "convergence",
            "oracle-check", "compare")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
NO_EVOLUTION_TOL = 1e-9
IRREVERSIBILITY_TOL = 1e-12


class Context:
    """Everything a command needs, built lazily from the config."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        m = cfg.mesh
        spec = MeshSpec(m["dim"], tuple(m["extent"]), tuple(m["nodes"]), m["boundary"])
        self.ops = build_mesh_and_operators(spec, cfg.sigma)
        self.grid = TimeGrid(float(cfg.time["T"]), int(cfg.time["m"]))
        s = cfg.solver
        self.solver = SolverConfig(method=s["method"], omega=float(s["omega"]),
                                   tol=float(s["tol"]), max_iter=s["max_iter"])

    def forcing(self, sec: dict | None = None, horizon: float | None = None) -> ForcingSampler:
        sec = sec or self.cfg.forcing
        horizon = self.grid.T if horizon is None else horizon
        if sec.get("tabulated") is not None:
            tab = sec["tabulated"]
            if tab["times"][0] > 0 or tab["times"][-1] < horizon:
                raise ConfigError([f"forcing.tabulated.times: must cover [0, {horizon:g}]"])
            return presets.tabulated_forcing(self.ops, tab["times"], tab["values"])
        return presets.make_forcing(sec["preset"], sec["params"], self.ops.spec.extent, horizon)

    def initial(self, f: ForcingSampler, sec: dict | None = None) -> np.ndarray:
        sec = sec or self.cfg.initial
        if sec.get("tabulated") is not None:
            return self.ops.from_grid(sec["tabulated"])
        return presets.make_initial(sec["preset"], sec["params"], self.ops, f, self.solver)


def _trajectory_checks(traj, tol: float) -> Report:
    rep = Report("trajectory")
    res = max((d["residual"] for d in traj.diagnostics), default=0.0)
    rep.add("complementarity", res <= tol, res, tol)
    drop = float(np.min(traj.snapshots[:-1] - traj.snapshots[1:])) if len(traj.snapshots) > 1 else 0.0
    rep.add("irreversibility", drop >= -IRREVERSIBILITY_TOL, drop, -IRREVERSIBILITY_TOL)
    rep.data["fallback_steps"] = [d["step"] for d in traj.diagnostics if d["fallback"]]
    return rep


def _strided(traj, stride):
    idx = sorted(set(range(0, len(traj.snapshots), stride)) | {len(traj.snapshots) - 1})
    return traj.times[idx], traj.snapshots[idx], traj.multipliers[idx]


def _traj_files(traj, stride, tag=""):
    times, snaps, mults = _strided(traj, stride)
    return {f"trajectory{tag}.csv": artifacts.field_rows(traj.ops, times, snaps),
            f"multipliers{tag}.csv": artifacts.field_rows(traj.ops, times, mults)}


def cmd_validate(ctx: Context):
    reports = [validate_problem(ctx.ops)]
    if reports[0].passed:
        f = ctx.forcing()
        reports.append(check_admissible_initial(ctx.initial(f), f, ctx.ops))
    return reports, {}


def cmd_run(ctx: Context):
    val = validate_problem(ctx.ops)
    if not val.passed:
        return [val], {}
    f = ctx.forcing()
    z0 = ctx.initial(f)
    adm = check_admissible_initial(z0, f, ctx.ops)
    if not adm.passed:
        return [val, adm], {}
    traj = run_minimizing_movement(z0, f, ctx.grid, ctx.ops, ctx.solver, require_admissible=False)
    bal = analysis.energy_balance_check(traj, f)
    reports = [val, adm, _trajectory_checks(traj, ctx.solver.tol), apriori_report(traj, f), bal,
               analysis.unilateral_minimality_probe(traj, f, trials=ctx.cfg.study["trials"],
                                                    seed=ctx.cfg.seed)]
    drift = max(norm(ctx.ops, z - z0, "v") for z in traj.snapshots)
    if f.stationary:
        rep = Report("no_evolution")
        rep.add("max_drift", drift <= NO_EVOLUTION_TOL, drift, NO_EVOLUTION_TOL)
        reports.append(rep)
    else:
        reports[2].data["max_drift"] = drift
    d = bal.data
    files = _traj_files(traj, ctx.cfg.output["stride"])
    files["energy.csv"] = artifacts.table_csv(
        ["t", "energy", "work", "balance"], zip(d["times"], d["energy"], d["work"], d["balance"]))
    files["diagnostics.json"] = artifacts.json_text({"steps": traj.diagnostics})
    return reports, files


def cmd_equilibrium(ctx: Context):
    f = ctx.forcing()
    if f.limit is None:
        raise ConfigError(["forcing: the equilibrium command needs a preset with a declared limit"])
    z0 = ctx.initial(f)
    eq = analysis.solve_equilibrium(z0, ctx.ops.interpolate(f.limit), ctx.ops, ctx.solver)
    files = {"equilibrium.csv": artifacts.field_rows(ctx.ops, [np.inf], [eq.z_inf])}
    return [validate_problem(ctx.ops), eq.report], files


def cmd_longtime(ctx: Context):
    study = ctx.cfg.study
    horizons = study["horizons"]
    f = ctx.forcing(horizon=max(horizons))
    z0 = ctx.initial(f)
    tau = study["tau"] if study["tau"] is not None else ctx.grid.tau
    rep = analysis.longtime_study(z0, f, ctx.ops, horizons, tau, ctx.solver, study["threshold"])
    reports = [validate_problem(ctx.ops), rep]
    other = (study.get("compare") or {}).get("forcing")
    if other is not None:
        g = ctx.forcing(other, horizon=max(horizons))
        reports.append(analysis.limit_path_independence(z0, f, g, ctx.ops, max(horizons), tau,
                                                        ctx.solver))
    files = {"longtime.csv": artifacts.table_csv(
        ["T", "distance"], zip(rep.data["horizons"], rep.data["distances"]))}
    return reports, files


def cmd_singular_limit(ctx: Context):
    study = ctx.cfg.study
    f = ctx.forcing()
    z0 = ctx.initial(f)
    eps = sorted(set(float(e) for e in study["epsilons"]) | {0.0}, reverse=True)
    delta = float(study["perturbation"])
    z0_eps = None
    if delta:
        z0_eps = z0 - delta * ctx.ops.interpolate(presets.bump(ctx.ops.spec.extent))
    keep: dict = {}
    try:
        rep = regularized.singular_limit_study(eps, z0, f, ctx.grid, ctx.ops, ctx.solver,
                                               z0_eps=z0_eps, keep=keep)
    except ValueError as exc:
        raise ConfigError([f"study.epsilons: {exc}"]) from exc
    files = {"singular_limit.csv": artifacts.table_csv(
        ["epsilon", "distance"], zip(rep.data["epsilons"], rep.data["distances"]))}
    for e, traj in keep.items():
        files.update(_traj_files(traj, ctx.cfg.output["stride"], tag=f"_eps_{e!r}"))
    return [validate_problem(ctx.ops), rep], files


def cmd_convergence(ctx: Context):
    ladder = ctx.cfg.study["ladder"]
    f = ctx.forcing()
    z0 = ctx.initial(f)
    T = ctx.grid.T
    bal = analysis.energy_balance_study(z0, f, ctx.ops, T, ladder, ctx.solver)
    interp = forcing_interpolation_check(f, TimeGrid(T, ladder[0]), ctx.ops, ladder=ladder)
    ratios = []
    for m in ladder:
        traj = run_minimizing_movement(z0, f, TimeGrid(T, m), ctx.ops, ctx.solver)
        ratios.append(apriori_report(traj, f).data["ratio"])
    bal.data["apriori_ratios"] = ratios
    rows = zip(ladder, [T / m for m in ladder], bal.data["max_residuals"], ratios,
               interp.data["gaps"])
    files = {"convergence.csv": artifacts.table_csv(
        ["m", "tau", "balance_residual", "apriori_ratio", "constant_gap"], rows)}
    return [validate_problem(ctx.ops), bal, interp], files


def cmd_oracle_check(ctx: Context):
    study = ctx.cfg.study
    rep = oracles.oracle_suite(ctx.cfg.seed, study["instances"], study["max_n"])
    return [rep], {}


def cmd_compare(ctx: Context):
    other = ctx.cfg.study.get("compare")
    if not other:
        raise ConfigError(["study.compare: the compare command needs a second data set"])
    f1 = ctx.forcing()
    z1 = ctx.initial(f1)
    f2 = ctx.forcing(other["forcing"]) if other.get("forcing") else f1
    z2 = ctx.initial(f2, other["initial"]) if other.get("initial") else ctx.initial(f2)
    try:
        rep = analysis.comparison_study((z1, f1), (z2, f2), ctx.grid, ctx.ops, ctx.solver)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    dep = Report("dependence")
    dep.data.update(analysis.dependence_terms((z1, f1), (z2, f2), ctx.grid, ctx.ops, ctx.solver))
    return [validate_problem(ctx.ops), rep, dep], {}


DISPATCH = {
    "validate": cmd_validate,
    "run": cmd_run,
    "equilibrium": cmd_equilibrium,
    "longtime": cmd_longtime,
    "singular-limit": cmd_singular_limit,
    "convergence": cmd_convergence,
    "oracle-check": cmd_oracle_check,
    "compare": cmd_compare,
}


def dispatch(command: str, cfg: ScenarioConfig, out_dir: str | Path) -> int:
    if command not in DISPATCH:
        raise ValueError(f"unknown command {command!r}")
    try:
        ctx = Context(cfg)
        reports, files = DISPATCH[command](ctx)
    except ConfigError as exc:
        artifacts.write_failure(out_dir, command, str(exc))
        log.error("%s", exc)
        return EXIT_CONFIG
    except (SolverError, ValueError, ArithmeticError) as exc:
        step = getattr(exc, "step", None)
        extra = {"step": step} if step is not None else None
        artifacts.write_failure(out_dir, command, f"{type(exc).__name__}: {exc}", extra)
        log.error("%s failed: %s", command, exc)
        return EXIT_ABORT
    passed = all(r.passed for r in reports)
    criteria = {f"{r.name}.{c.name}": c.passed for r in reports for c in r.checks}
    summary = {"command": command, "complete": True, "passed": passed, "criteria": criteria,
               "seed": cfg.seed, "warnings": cfg.warnings,
               "files": sorted(set(files) | {"report.json", "config.json", "summary.json"})}
    files = dict(files)
    files["report.json"] = artifacts.json_text({"reports": [r.to_dict() for r in reports]})
    files["config.json"] = cfg.canonical()
    files["summary.json"] = artifacts.json_text(summary)
    try:
        artifacts.write_outputs(files, out_dir)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_ABORT
    for r in reports:
        for c in r.checks:
            log.info("%-6s %s.%s%s", "PASS" if c.passed else "FAIL", r.name, c.name,
                     "" if c.value is None else f" = {c.value}")
            if not c.passed and "message" in c.detail:
                log.info("       %s", c.detail["message"])
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irrevvi",
                                description="Run and check irreversible evolutionary VI scenarios.",
                                epilog=__doc__.split("\n\n", 1)[1])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON scenario file")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and output.dir)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="unknown config keys are errors (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="unknown config keys are reported and ignored")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config, strict=args.strict)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    for w in cfg.warnings:
        log.warning("%s", w)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print(f"--seed must be an unsigned 64-bit integer, got {args.seed}", file=sys.stderr)
            return EXIT_CONFIG
        cfg.seed = args.seed
    out = args.out or os.environ.get(OUT_ENV) or cfg.output["dir"]
    return dispatch(args.command, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
