"""Minimizing-movement time stepping for the irreversible evolution.

Each step solves the upper-obstacle problem with the previous state as the
obstacle and the time-averaged forcing as the load::

    z_k = argmin { J_k(v) : v <= z_{k-1} },   J_k(v) = 1/2 v.K v - (M f_k).v

so ``z_k <= z_{k-1}`` holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import obstacle
from .mesh_ops import (DiscreteOperators, SolverError, _check_field, nodal_elliptic_residual,
                       norm, pointwise_min)
from .obstacle import ObstacleProblem, SolverConfig
from .reports import Report

GAUSS3 = np.polynomial.legendre.leggauss(3)


class StepError(SolverError):
    """A time step's obstacle solve failed."""

    def __init__(self, step: int, cause: SolverError):
        super().__init__(f"step {step}: {cause}", cause.residual, cause.iterations)
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    T: float
    m: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"step count m must be a positive integer, got {self.m}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "m", int(self.m))

    @property
    def tau(self) -> float:
        return self.T / self.m

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.tau

    def t(self, k: int) -> float:
        return k * self.tau


@dataclass
class ForcingSampler:
    """Space-time forcing ``f(x, t)`` evaluated on node coordinates.

    ``value(x, t)`` takes an ``(n, dim)`` coordinate array.  The optional
    callables supply the exact time average over ``[a, b]``, the time
    derivative, the lower envelope ``f_hat`` and the long-time limit ``f_inf``.
    """

    value: Callable[[np.ndarray, float], np.ndarray]
    average: Callable[[np.ndarray, float, float], np.ndarray] | None = None
    rate: Callable[[np.ndarray, float], np.ndarray] | None = None
    lower: Callable[[np.ndarray], np.ndarray] | None = None
    limit: Callable[[np.ndarray], np.ndarray] | None = None
    stationary: bool = False
    name: str = "custom"

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.value(x, t), dtype=float), (len(x),)).copy()

    def time_derivative(self, x: np.ndarray, t: float, h: float) -> tuple[np.ndarray, bool]:
        """``d/dt f``; central differences with step ``h`` when no analytic rate is known."""
        if self.rate is not None:
            return np.broadcast_to(np.asarray(self.rate(x, t), float), (len(x),)).copy(), False
        if self.stationary:
            return np.zeros(len(x)), False
        return (self(x, t + h) - self(x, t - h)) / (2 * h), True


@dataclass
class Trajectory:
    """Snapshots ``z_0..z_m`` with the data that produced them.

    Row 0 of ``forcing_avgs`` holds ``f(., 0)`` and row 0 of ``multipliers``
    holds ``f(., 0) - rho(z_0)``; rows ``k >= 1`` belong to step ``k``.
    ``steps`` lists which step indices are stored (all of them unless thinned).
    """

    grid: TimeGrid
    ops: DiscreteOperators
    snapshots: np.ndarray
    forcing_avgs: np.ndarray
    multipliers: np.ndarray
    diagnostics: list[dict] = field(default_factory=list)
    steps: np.ndarray | None = None
    extra_mass: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.steps is None:
            self.steps = np.arange(self.grid.m + 1)

    @property
    def dense(self) -> bool:
        return len(self.steps) == self.grid.m + 1

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.grid.tau

    def z(self, k: int) -> np.ndarray:
        pos = np.searchsorted(self.steps, k)
        if pos >= len(self.steps) or self.steps[pos] != k:
            raise KeyError(f"step {k} was not stored (thinned trajectory)")
        return self.snapshots[pos]

    def require_dense(self):
        if not self.dense:
            raise ValueError("this analysis needs every step; rerun with stride=1")


def gauss_average(f: ForcingSampler, x: np.ndarray, a: float, b: float) -> np.ndarray:
    nodes, weights = GAUSS3
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return sum(w * f(x, mid + half * s) for s, w in zip(nodes, weights)) / 2.0


def average_forcing(f: ForcingSampler, grid: TimeGrid, k: int, ops: DiscreteOperators) -> np.ndarray:
    """``f_k = (1/tau) int_{t_{k-1}}^{t_k} f dt``; ``k = 0`` gives ``f(., 0)``."""
    if not 0 <= k <= grid.m:
        raise ValueError(f"step index {k} outside 0..{grid.m}")
    x = ops.coords
    if k == 0:
        return f(x, 0.0)
    a, b = grid.t(k - 1), grid.t(k)
    if f.average is not None:
        return np.broadcast_to(np.asarray(f.average(x, a, b), float), (ops.n,)).copy()
    return gauss_average(f, x, a, b)


def check_admissible_initial(z0: np.ndarray, f: ForcingSampler, ops: DiscreteOperators,
                             tol: float = 1e-9) -> Report:
    """``-Lap z0 + sigma z0 - f(., 0) <= 0``, tested node by node (lumped mass)."""
    z0 = _check_field(ops, z0, "z0")
    excess = nodal_elliptic_residual(z0, ops) - f(ops.coords, 0.0)
    worst = float(np.max(excess))
    rep = Report("admissible_initial")
    rep.add("initial_sign_condition", bool(np.all(np.isfinite(z0))) and worst <= tol, worst, tol,
            offending_nodes=np.flatnonzero(excess > tol)[:20])
    return rep


def march(z0: np.ndarray, f: ForcingSampler, grid: TimeGrid, ops: DiscreteOperators,
          cfg: SolverConfig | None = None, extra_mass: float = 0.0, epsilon: float = 0.0,
          stride: int = 1) -> Trajectory:
    """Step loop shared by the plain and the regularized schemes.

    With ``extra_mass = c > 0`` each step uses ``K + cM`` and load ``f_k + c z_{k-1}``.
    """
    cfg = cfg or SolverConfig()
    if stride < 1:
        raise ValueError("stride must be >= 1")
    z_prev = _check_field(ops, z0, "z0").copy()
    f0 = average_forcing(f, grid, 0, ops)
    keep = [0]
    snaps = [z_prev.copy()]
    avgs = [f0]
    mults = [f0 - nodal_elliptic_residual(z_prev, ops)]
    diags = []
    for k in range(1, grid.m + 1):
        fk = average_forcing(f, grid, k, ops)
        g = fk if extra_mass == 0.0 else fk + extra_mass * z_prev
        prob = ObstacleProblem(z_prev, g, ops, extra_mass)
        try:
            sol = obstacle.solve(prob, cfg, warm_start=z_prev)
        except SolverError as exc:
            raise StepError(k, exc) from exc
        diags.append({"step": k, "iterations": sol.iterations, "residual": sol.comp_residual,
                      "method": sol.method, "fallback": sol.fallback})
        z_prev = sol.z
        if k % stride == 0 or k == grid.m:
            keep.append(k)
            snaps.append(sol.z)
            avgs.append(fk)
            mults.append(sol.multiplier)
    return Trajectory(grid, ops, np.array(snaps), np.array(avgs), np.array(mults), diags,
                      np.array(keep), extra_mass, epsilon)


def run_minimizing_movement(z0: np.ndarray, f: ForcingSampler, grid: TimeGrid,
                            ops: DiscreteOperators, cfg: SolverConfig | None = None,
                            require_admissible: bool = True, stride: int = 1) -> Trajectory:
    if require_admissible:
        adm = check_admissible_initial(z0, f, ops)
        if not adm.passed:
            c = adm.checks[0]
            raise ValueError(f"initial data not admissible: max(rho(z0) - f(0)) = {c.value:.3e}")
    return march(z0, f, grid, ops, cfg, stride=stride)


def eval_interpolant(traj: Trajectory, t: float, kind: str = "linear") -> np.ndarray:
    grid = traj.grid
    if not (0.0 <= t <= grid.T * (1 + 1e-14)):
        raise ValueError(f"t = {t} outside [0, {grid.T}]")
    if t == 0.0:
        return traj.z(0).copy()
    times = grid.times
    k = int(np.searchsorted(times, t, side="left"))
    k = min(max(k, 1), grid.m)  # t in (t_{k-1}, t_k]
    if kind == "constant":
        return traj.z(k).copy()
    if kind == "linear":
        theta = (t - times[k - 1]) / grid.tau
        z_prev, z_k = traj.z(k - 1), traj.z(k)
        return z_prev + theta * (z_k - z_prev)
    raise ValueError(f"unknown interpolant kind {kind!r}")


def interpolant_gap(traj: Trajectory) -> float:
    """``sup_t ||linear - constant||_V = max_k ||z_k - z_{k-1}||_V``."""
    traj.require_dense()
    return max(norm(traj.ops, traj.snapshots[k] - traj.snapshots[k - 1], "v")
               for k in range(1, traj.grid.m + 1))


def dual_rate_sq_integral(f: ForcingSampler, grid: TimeGrid, ops: DiscreteOperators,
                          points: int = 3) -> tuple[float, bool]:
    """``int_0^T ||d/dt f||_{V*}^2 dt`` by composite Gauss-Legendre on the time grid."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    h = grid.tau / 100.0
    total, approx = 0.0, False
    if f.stationary:
        return 0.0, False
    for k in range(1, grid.m + 1):
        a, b = grid.t(k - 1), grid.t(k)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for s, w in zip(nodes, weights):
            r, flag = f.time_derivative(ops.coords, mid + half * s, h)
            approx |= flag
            total += half * w * norm(ops, ops.mass * r, "vstar") ** 2
    return total, approx


def lower_envelope(f: ForcingSampler, grid: TimeGrid, ops: DiscreteOperators) -> tuple[np.ndarray, bool]:
    """Declared ``f_hat``, or (flagged) the minimum over the sampled times."""
    if f.lower is not None:
        return ops.interpolate(f.lower), False
    nodes, _ = GAUSS3
    samples = [f(ops.coords, t) for t in grid.times]
    for k in range(1, grid.m + 1):
        mid, half = 0.5 * (grid.t(k - 1) + grid.t(k)), 0.5 * grid.tau
        samples.extend(f(ops.coords, mid + half * s) for s in nodes)
    return np.min(samples, axis=0), True


def apriori_report(traj: Trajectory, f: ForcingSampler, tol: float = 1e-9) -> Report:
    traj.require_dense()
    ops, grid = traj.ops, traj.grid
    tau = grid.tau
    rep = Report("apriori")

    num = tau * sum(norm(ops, (traj.snapshots[k] - traj.snapshots[k - 1]) / tau, "v") ** 2
                    for k in range(1, grid.m + 1))
    den, approx = dual_rate_sq_integral(f, grid, ops)
    ratio = num / den if den > 0 else (0.0 if num == 0 else float("inf"))
    rep.data.update(velocity_sq=num, forcing_rate_sq=den, ratio=ratio, rate_approximate=approx)
    rep.add("velocity_bound_finite", np.isfinite(ratio), ratio)

    f_hat, sampled = lower_envelope(f, grid, ops)
    rho0 = nodal_elliptic_residual(traj.snapshots[0], ops)
    floor = pointwise_min(f_hat, rho0)
    worst_lower = worst_upper = worst_step = np.inf
    worst_l2 = -np.inf
    for k in range(1, grid.m + 1):
        rho = nodal_elliptic_residual(traj.snapshots[k], ops)
        fk = traj.forcing_avgs[k]
        worst_lower = min(worst_lower, float(np.min(rho - floor)))
        worst_upper = min(worst_upper, float(np.min(fk - rho)))
        step_floor = pointwise_min(fk, nodal_elliptic_residual(traj.snapshots[k - 1], ops))
        worst_step = min(worst_step, float(np.min(rho - step_floor)))
        bound = 2 * (norm(ops, floor, "l2") ** 2 + norm(ops, fk, "l2") ** 2)
        worst_l2 = max(worst_l2, norm(ops, rho, "l2") ** 2 - bound)
    rep.data["envelope_sampled"] = sampled
    rep.add("ls_chain_lower", worst_lower >= -tol, worst_lower, -tol)
    rep.add("ls_chain_upper", worst_upper >= -tol, worst_upper, -tol)
    rep.add("ls_step_lower", worst_step >= -tol, worst_step, -tol)
    rep.add("pointwise_l2_bound", worst_l2 <= tol, worst_l2, tol)
    return rep


def piecewise_constant_gap(f: ForcingSampler, grid: TimeGrid, ops: DiscreteOperators,
                           points: int = 5) -> float:
    """``||fbar_tau - f||_{L2(0,T;L2)}`` with ``points``-point Gauss-Legendre per step."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    total = 0.0
    for k in range(1, grid.m + 1):
        fk = average_forcing(f, grid, k, ops)
        a, b = grid.t(k - 1), grid.t(k)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for s, w in zip(nodes, weights):
            d = fk - f(ops.coords, mid + half * s)
            total += half * w * float(d @ (ops.mass * d))
    return float(np.sqrt(total))


def forcing_interpolation_check(f: ForcingSampler, grid: TimeGrid, ops: DiscreteOperators,
                                ladder: Sequence[int] | None = None,
                                reduction: float | None = None) -> Report:
    """Difference-quotient bound with factor 4, and decay of the piecewise-constant gap.

    With ``reduction`` set, the last gap on the ladder must also be at most
    ``reduction`` times the first.
    """
    rep = Report("forcing_interpolation")
    tau = grid.tau
    lhs = 0.0
    prev = average_forcing(f, grid, 0, ops)
    for k in range(1, grid.m + 1):
        fk = average_forcing(f, grid, k, ops)
        lhs += tau * norm(ops, ops.mass * (fk - prev) / tau, "vstar") ** 2
        prev = fk
    rate_sq, approx = dual_rate_sq_integral(f, grid, ops)
    rhs = 4.0 * rate_sq
    rep.add("difference_quotient_bound", lhs <= rhs * (1 + 1e-12) + 1e-14, lhs, rhs,
            rate_approximate=approx)

    ladder = list(ladder) if ladder is not None else [grid.m * 2 ** j for j in range(6)]
    gaps = [piecewise_constant_gap(f, TimeGrid(grid.T, m), ops) for m in ladder]
    rep.data.update(ladder=ladder, gaps=gaps, lhs=lhs, rhs=rhs)
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:])) or max(gaps) == 0.0
    rep.add("constant_interpolant_gap_decreasing", decreasing, gaps[-1])
    ratio = gaps[-1] / gaps[0] if gaps[0] > 0 else 0.0
    rep.data["gap_ratio"] = ratio
    if reduction is not None:
        rep.add("gap_reduction", ratio <= reduction, ratio, reduction)
    return rep
