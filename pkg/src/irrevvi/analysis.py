"""Energy, balance, unilateral minimality, comparison, continuous dependence and
long-time behaviour of computed trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import obstacle
from .evolution import (GAUSS3, ForcingSampler, TimeGrid, Trajectory, average_forcing,
                        run_minimizing_movement)
from .mesh_ops import DiscreteOperators, _check_field, nodal_elliptic_residual, norm
from .obstacle import ObstacleProblem, SolverConfig
from .reports import Report


def energy_with_load(ops: DiscreteOperators, w: np.ndarray, g: np.ndarray) -> float:
    """``1/2 w.A w + sigma/2 w.M w - (M g).w`` for a nodal forcing ``g``."""
    w = _check_field(ops, w, "w")
    return float(0.5 * w @ (ops.K @ w) - (ops.mass * g) @ w)


def energy(w: np.ndarray, t: float, f: ForcingSampler, ops: DiscreteOperators) -> float:
    return energy_with_load(ops, w, f(ops.coords, t))


def _rates_at(f: ForcingSampler, ops: DiscreteOperators, times, h: float):
    out, approx = [], False
    for t in times:
        r, flag = f.time_derivative(ops.coords, float(t), h)
        out.append(r)
        approx |= flag
    return np.array(out), approx


def energy_balance_check(traj: Trajectory, f: ForcingSampler) -> Report:
    """Window residuals ``R(s,t) = E(z(t),t) - E(z(s),s) + int_s^t <f', z>``.

    The integral is the trapezoid rule over the snapshots, so with
    ``S_k = E(z_k, t_k) + I_k`` every window residual is ``S_k - S_j`` and the
    worst one is ``max S - min S``.
    """
    traj.require_dense()
    ops, grid = traj.ops, traj.grid
    times = grid.times
    energies = np.array([energy(z, t, f, ops) for z, t in zip(traj.snapshots, times)])
    rates, approx = _rates_at(f, ops, times, grid.tau / 100.0)
    power = np.einsum("ki,ki->k", rates * ops.mass, traj.snapshots)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * grid.tau * (power[1:] + power[:-1]))])
    s = energies + integral
    max_r = float(np.max(s) - np.min(s))
    rep = Report("energy_balance")
    rep.data.update(times=times, energy=energies, work=integral, balance=s, max_residual=max_r,
                    rate_approximate=approx)
    rep.add("balance_residual_finite", np.isfinite(max_r), max_r)
    return rep


def energy_balance_study(z0, f: ForcingSampler, ops: DiscreteOperators, T: float,
                         ladder: Sequence[int], cfg: SolverConfig | None = None) -> Report:
    """Worst balance residual for each step count in ``ladder``; asserts strict decrease."""
    rep = Report("energy_balance_study")
    residuals = []
    for m in ladder:
        traj = run_minimizing_movement(z0, f, TimeGrid(T, m), ops, cfg)
        residuals.append(energy_balance_check(traj, f).data["max_residual"])
    rep.data.update(ladder=list(ladder), max_residuals=residuals)
    strict = all(b < a for a, b in zip(residuals, residuals[1:]))
    rep.add("balance_residual_strictly_decreasing", strict, residuals[-1])
    return rep


def unilateral_minimality_probe(traj: Trajectory, f: ForcingSampler, trials: int = 100,
                                seed: int = 0, deltas=(1e-3, 1e-2, 1e-1, 1.0),
                                rel_tol: float = 1e-10) -> Report:
    """Random downward competitors ``v = z_k - delta*phi``, ``phi ~ U[0,1]``.

    The energy at step ``k`` uses the forcing the step was solved with (``f_k``,
    and ``f(., 0)`` at ``k = 0``), which is the functional ``z_k`` minimizes.
    Checks ``E(v) - E(z_k) >= (K z_k - M f_k).(v - z_k) >= 0`` and
    ``E(z_k) <= E(z_{k-1})``.
    """
    traj.require_dense()
    ops = traj.ops
    K = ops.K
    rng = np.random.default_rng(seed)
    deltas = np.asarray(deltas, dtype=float)
    worst_gain = worst_first = worst_gap = worst_step = np.inf
    violations = []
    for k in range(traj.grid.m + 1):
        z = traj.snapshots[k]
        load = ops.mass * traj.forcing_avgs[k]
        e_z = 0.5 * z @ (K @ z) - load @ z
        scale = rel_tol * max(1.0, abs(e_z))
        phi = np.vstack([rng.uniform(0.0, 1.0, size=(trials, ops.n)), np.ones((1, ops.n))])
        grad = K @ z - load
        for d in deltas:
            v = z - d * phi
            e_v = 0.5 * np.einsum("ti,ti->t", v, (K @ v.T).T) - v @ load
            gain = e_v - e_z
            first = (v - z) @ grad
            worst_gain = min(worst_gain, float(np.min(gain)) / max(1.0, abs(e_z)))
            worst_first = min(worst_first, float(np.min(first)) / max(1.0, abs(e_z)))
            worst_gap = min(worst_gap, float(np.min(gain - first)) / max(1.0, abs(e_z)))
            bad = np.flatnonzero((gain < -scale) | (first < -scale) | (gain - first < -scale))
            violations.extend({"step": k, "seed": seed, "delta": float(d), "trial": int(t)}
                              for t in bad[:5])
        if k >= 1:
            z_prev = traj.snapshots[k - 1]
            e_prev = 0.5 * z_prev @ (K @ z_prev) - load @ z_prev
            worst_step = min(worst_step, (e_prev - e_z) / max(1.0, abs(e_z)))
    rep = Report("unilateral_minimality")
    rep.data.update(seed=seed, trials=trials, deltas=deltas, violations=violations[:50])
    rep.add("no_energy_decrease", worst_gain >= -rel_tol, worst_gain, -rel_tol)
    rep.add("first_order_nonnegative", worst_first >= -rel_tol, worst_first, -rel_tol)
    rep.add("convexity_gap", worst_gap >= -rel_tol, worst_gap, -rel_tol)
    rep.add("step_energy_decrease", worst_step >= -rel_tol, worst_step, -rel_tol)
    return rep


def _sample_times(grid: TimeGrid) -> list[float]:
    nodes, _ = GAUSS3
    ts = list(grid.times)
    for k in range(1, grid.m + 1):
        mid, half = 0.5 * (grid.t(k - 1) + grid.t(k)), 0.5 * grid.tau
        ts.extend(mid + half * s for s in nodes)
    return ts


def comparison_study(data1, data2, grid: TimeGrid, ops: DiscreteOperators,
                     cfg: SolverConfig | None = None, tol: float = 1e-10) -> Report:
    """Ordered data ``(z0^1, f^1) <= (z0^2, f^2)`` must give ordered trajectories."""
    (z01, f1), (z02, f2) = data1, data2
    if np.any(np.asarray(z01) > np.asarray(z02)):
        raise ValueError("comparison hypothesis violated: z0^1 <= z0^2 fails")
    for t in _sample_times(grid):
        if np.any(f1(ops.coords, t) > f2(ops.coords, t)):
            raise ValueError(f"comparison hypothesis violated: f^1 <= f^2 fails at t={t}")
    t1 = run_minimizing_movement(z01, f1, grid, ops, cfg)
    t2 = run_minimizing_movement(z02, f2, grid, ops, cfg)
    margins = np.min(t2.snapshots - t1.snapshots, axis=1)
    rep = Report("comparison_study")
    rep.data["step_margins"] = margins
    rep.add("trajectories_ordered", float(np.min(margins)) >= -tol, float(np.min(margins)), -tol)
    return rep


def dependence_terms(data1, data2, grid: TimeGrid, ops: DiscreteOperators,
                     cfg: SolverConfig | None = None) -> dict:
    """``L = sup_k ||z^1_k - z^2_k||_V`` and the data distance ``R`` on one grid."""
    (z01, f1), (z02, f2) = data1, data2
    t1 = run_minimizing_movement(z01, f1, grid, ops, cfg)
    t2 = run_minimizing_movement(z02, f2, grid, ops, cfg)
    L = max(norm(ops, a - b, "v") for a, b in zip(t1.snapshots, t2.snapshots))
    init = norm(ops, np.asarray(z01) - np.asarray(z02), "v")
    sup_f = max(norm(ops, ops.mass * (f1(ops.coords, t) - f2(ops.coords, t)), "vstar")
                for t in grid.times)
    nodes, weights = GAUSS3
    h = grid.tau / 100.0
    l1 = 0.0
    for k in range(1, grid.m + 1):
        mid, half = 0.5 * (grid.t(k - 1) + grid.t(k)), 0.5 * grid.tau
        for s, w in zip(nodes, weights):
            t = mid + half * s
            d = f1.time_derivative(ops.coords, t, h)[0] - f2.time_derivative(ops.coords, t, h)[0]
            l1 += half * w * norm(ops, ops.mass * d, "vstar")
    R = init + sup_f + l1
    return {"T": grid.T, "m": grid.m, "tau": grid.tau, "L": L, "R": R,
            "ratio": L / R if R > 0 else (0.0 if L == 0 else float("inf")),
            "init": init, "sup_f": sup_f, "rate_l1": l1}


def dependence_study(data1, data2, grids: Sequence[TimeGrid], ops: DiscreteOperators,
                     cfg: SolverConfig | None = None, growth: float = 1.2,
                     tol: float = 1e-12) -> Report:
    """Ratio ``L/R`` across grids; it may not grow by more than ``growth`` when T doubles."""
    rows = [dependence_terms(data1, data2, g, ops, cfg) for g in grids]
    rep = Report("dependence_study")
    rep.data["rows"] = rows
    rep.add("uniqueness", all(not (r["R"] == 0 and r["L"] > tol) for r in rows))
    worst = 0.0
    for a in rows:
        for b in rows:
            if np.isclose(b["T"], 2 * a["T"]) and np.isclose(b["tau"], a["tau"]) and a["ratio"] > 0:
                worst = max(worst, b["ratio"] / a["ratio"])
    rep.add("ratio_bounded_under_T_doubling", worst <= growth, worst, growth)
    return rep


@dataclass
class EquilibriumSolution:
    z_inf: np.ndarray
    multiplier: np.ndarray
    comp_residual: float
    report: Report


def solve_equilibrium(z0: np.ndarray, f_inf: np.ndarray, ops: DiscreteOperators,
                      cfg: SolverConfig | None = None, tol: float = 1e-9) -> EquilibriumSolution:
    """Stationary obstacle problem with the initial state as obstacle and ``f_inf`` as load."""
    prob = ObstacleProblem(z0, f_inf, ops)
    sol = obstacle.solve(prob, cfg)
    rho = nodal_elliptic_residual(sol.z, ops)
    rep = Report("equilibrium")
    below = float(np.max(sol.z - z0))
    sub = float(np.max(rho - f_inf))
    comp = float(np.max(np.abs(np.minimum(z0 - sol.z, f_inf - rho))))
    rep.add("below_initial", below <= tol, below, tol)
    rep.add("subsolution", sub <= tol, sub, tol)
    rep.add("complementarity", comp <= tol, comp, tol)
    return EquilibriumSolution(sol.z, sol.multiplier, sol.comp_residual, rep)


def longtime_study(z0: np.ndarray, f: ForcingSampler, ops: DiscreteOperators,
                   horizons: Sequence[float], tau: float, cfg: SolverConfig | None = None,
                   threshold: float = 1e-6) -> Report:
    """Distance ``d(T) = ||z(T) - z_inf||_V`` at each horizon for one fixed ``tau``.

    One run to the largest horizon is made; since the scheme is sequential with
    fixed ``tau``, the state at an earlier horizon is the same as a separate
    run stopped there.
    """
    if f.limit is None:
        raise ValueError("long-time study needs a forcing with a declared limit f_inf")
    horizons = sorted(float(h) for h in horizons)
    steps = [h / tau for h in horizons]
    if any(abs(s - round(s)) > 1e-9 for s in steps):
        raise ValueError("every horizon must be a multiple of tau")
    f_inf = ops.interpolate(f.limit)
    grid = TimeGrid(horizons[-1], int(round(steps[-1])))
    for t in _sample_times(grid):
        if np.any(f(ops.coords, t) < f_inf - 1e-14):
            raise ValueError(f"long-time hypothesis violated: f < f_inf at t={t}")
    traj = run_minimizing_movement(z0, f, grid, ops, cfg)
    eq = solve_equilibrium(z0, f_inf, ops, cfg)
    dists = [norm(ops, traj.snapshots[int(round(s))] - eq.z_inf, "v") for s in steps]
    rep = Report("longtime")
    rep.data.update(horizons=horizons, distances=dists, tau=tau, z_inf=eq.z_inf,
                    z_final=traj.snapshots[-1])
    rep.checks.extend(eq.report.checks)
    rep.add("distance_nonincreasing", all(b <= a for a, b in zip(dists, dists[1:])), dists[-1])
    rep.add("distance_below_threshold", dists[-1] <= threshold, dists[-1], threshold)
    return rep


def limit_path_independence(z0: np.ndarray, f_a: ForcingSampler, f_b: ForcingSampler,
                            ops: DiscreteOperators, T: float, tau: float,
                            cfg: SolverConfig | None = None, tol: float = 1e-8) -> Report:
    """Two forcings with the same limit must drive ``z0`` to the same state."""
    ra = longtime_study(z0, f_a, ops, [T], tau, cfg, threshold=np.inf)
    rb = longtime_study(z0, f_b, ops, [T], tau, cfg, threshold=np.inf)
    lim_gap = float(np.max(np.abs(ra.data["z_inf"] - rb.data["z_inf"])))
    end_gap = float(np.max(np.abs(ra.data["z_final"] - rb.data["z_final"])))
    rep = Report("limit_path_independence")
    rep.data.update(distances_a=ra.data["distances"], distances_b=rb.data["distances"])
    rep.add("same_limit", lim_gap <= tol, lim_gap, tol)
    rep.add("same_final_state", end_gap <= tol, end_gap, tol)
    return rep
