"""Viscous (epsilon-parabolic) regularization and its singular limit.

A regularized step minimizes ``eps/(2 tau) |z - z_prev|_M^2 + J(z)`` over
``z <= z_prev``, which is the plain step with extra mass ``c = eps/tau`` and
load ``f_k + c z_prev``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import ForcingSampler, TimeGrid, Trajectory, march, run_minimizing_movement
from .mesh_ops import DiscreteOperators, norm, validate_problem
from .obstacle import SolverConfig
from .reports import Report


@dataclass
class EpsRunConfig:
    epsilon: float
    z0: np.ndarray
    f: ForcingSampler
    grid: TimeGrid
    ops: DiscreteOperators

    def __post_init__(self):
        if not self.epsilon >= 0 or not np.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")


def run_regularized(run: EpsRunConfig, cfg: SolverConfig | None = None, stride: int = 1) -> Trajectory:
    rep = validate_problem(run.ops)
    if not rep.passed:
        raise ValueError(rep.data["message"])
    c = run.epsilon / run.grid.tau
    return march(run.z0, run.f, run.grid, run.ops, cfg, extra_mass=c, epsilon=run.epsilon,
                 stride=stride)


def _fit_slope(eps, dist) -> float:
    eps, dist = np.asarray(eps, float), np.asarray(dist, float)
    ok = (eps > 0) & (dist > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(eps[ok]), np.log(dist[ok]), 1)[0])


def singular_limit_study(eps_list: Sequence[float], z0: np.ndarray, f: ForcingSampler,
                         grid: TimeGrid, ops: DiscreteOperators, cfg: SolverConfig | None = None,
                         z0_eps: np.ndarray | None = None, min_slope: float = 0.45,
                         workers: int | None = None, keep: dict | None = None) -> Report:
    """``D(eps) = max_k ||z_eps,k - z_k||_V`` against the plain run on the same grid.

    The discrete-to-discrete comparison at equal ``tau`` stands in for the
    continuum statement, so ``tau <= min(eps)/4`` is required to keep the time
    discretization error below the regularization effect.  Pass a dict as
    ``keep`` to receive the trajectories keyed by epsilon.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    positive = [e for e in eps_list if e > 0]
    if not positive:
        raise ValueError("need at least one positive epsilon")
    if grid.tau > min(positive) / 4 * (1 + 1e-12):
        raise ValueError(f"tau = {grid.tau:g} exceeds min(eps)/4 = {min(positive) / 4:g}")
    base = run_minimizing_movement(z0, f, grid, ops, cfg, require_admissible=False)
    start = z0 if z0_eps is None else z0_eps

    def one(e):
        return run_regularized(EpsRunConfig(e, start, f, grid, ops), cfg)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        trajs = list(pool.map(one, eps_list))
    if keep is not None:
        keep.update(zip(eps_list, trajs))
    dists = [max(norm(ops, a - b, "v") for a, b in zip(t.snapshots, base.snapshots))
             for t in trajs]
    slope = _fit_slope(eps_list, dists)
    matched = z0_eps is None
    rep = Report("singular_limit")
    rep.data.update(epsilons=eps_list, distances=dists, slope=slope, tau=grid.tau, matched=matched,
                    rationale="discrete comparison at equal tau with tau <= min(eps)/4")
    monotone = all(b <= a for a, b in zip(dists, dists[1:]))
    rep.data["monotone"] = monotone
    if matched:
        rep.add("distance_monotone_in_eps", monotone, dists[-1])
        if max(dists) == 0.0:
            rep.add("frozen", True, 0.0)
        else:
            rep.add("slope", bool(slope >= min_slope), slope, min_slope)
    else:
        positive_d = [d for e, d in zip(eps_list, dists) if e > 0]
        rep.data["plateau"] = positive_d[-1]
    if matched and 0.0 in eps_list:
        same = np.array_equal(trajs[eps_list.index(0.0)].snapshots, base.snapshots)
        rep.add("eps_zero_bit_identical", bool(same))
    return rep
