"""Forcing and initial-data families, and the reference scenarios used by tests and the CLI.

All spatial profiles use ``bump(x) = prod_d sin(pi x_d / L_d)``, which is
non-negative on the domain and vanishes on the low/high faces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import obstacle
from .evolution import ForcingSampler, TimeGrid
from .mesh_ops import DiscreteOperators, MeshSpec, build_mesh_and_operators, validate_problem
from .obstacle import ObstacleProblem, SolverConfig


def bump(extent) -> Callable[[np.ndarray], np.ndarray]:
    L = np.asarray(extent, dtype=float)

    def profile(x):
        return np.prod(np.sin(np.pi * np.asarray(x) / L), axis=1)

    return profile


# Each builder receives the preset parameters plus the mesh extent and the horizon,
# and returns a ForcingSampler.  Defaults are filled in by FORCING_DEFAULTS.
FORCING_DEFAULTS: dict[str, dict[str, float]] = {
    "stationary": {"base": 0.5, "amp": -1.5},
    "drifting": {"base": 0.0, "amp": 0.0, "rate": 1.0},
    "exp-relax": {"limit_base": -1.0, "limit_amp": 2.0, "h0": 1.2, "h1": 0.0, "decay": 1.0},
    "sinusoidal": {"base": 0.0, "amp": 1.0, "freq": 1.0},
    "moving": {"base": 0.5, "amp": 2.0, "width": 0.1, "start": 0.2, "speed": 0.6},
    "low-regularity": {"alpha": 0.75},
}


def _stationary(p, extent, horizon):
    prof = bump(extent)

    def value(x, t):
        return p["base"] + p["amp"] * prof(x)

    return ForcingSampler(value, average=lambda x, a, b: value(x, a), rate=lambda x, t: 0.0 * prof(x),
                          lower=lambda x: value(x, 0.0), limit=lambda x: value(x, 0.0),
                          stationary=True, name="stationary")


def _drifting(p, extent, horizon):
    prof = bump(extent)

    def value(x, t):
        return p["base"] + p["amp"] * prof(x) - p["rate"] * t

    rate = p["rate"]
    lo_t = horizon if rate >= 0 else 0.0
    return ForcingSampler(value, average=lambda x, a, b: value(x, 0.5 * (a + b)),
                          rate=lambda x, t: np.full(len(x), -rate),
                          lower=lambda x: value(x, lo_t), name="drifting")


def _exp_relax(p, extent, horizon):
    prof = bump(extent)
    lam = p["decay"]
    if lam <= 0:
        raise ValueError("exp-relax needs decay > 0")
    if p["h0"] < 0 or p["h0"] + min(p["h1"], 0.0) < 0:
        raise ValueError("exp-relax needs a non-negative excess h0 + h1*bump")

    def limit(x):
        return p["limit_base"] + p["limit_amp"] * prof(x)

    def excess(x):
        return p["h0"] + p["h1"] * prof(x)

    def value(x, t):
        return limit(x) + np.exp(-lam * t) * excess(x)

    def average(x, a, b):
        return limit(x) + (np.exp(-lam * a) - np.exp(-lam * b)) / (lam * (b - a)) * excess(x)

    return ForcingSampler(value, average=average, rate=lambda x, t: -lam * np.exp(-lam * t) * excess(x),
                          lower=limit, limit=limit, name="exp-relax")


def _sinusoidal(p, extent, horizon):
    prof = bump(extent)
    w = p["freq"]

    def value(x, t):
        return p["base"] + p["amp"] * prof(x) * np.sin(w * t)

    def average(x, a, b):
        return p["base"] + p["amp"] * prof(x) * (np.cos(w * a) - np.cos(w * b)) / (w * (b - a))

    return ForcingSampler(value, average=average,
                          rate=lambda x, t: p["amp"] * w * prof(x) * np.cos(w * t),
                          lower=lambda x: p["base"] - abs(p["amp"]) * prof(x), name="sinusoidal")


def _moving(p, extent, horizon):
    s2 = p["width"] ** 2

    def centre(t):
        return p["start"] + p["speed"] * t

    def gauss(x, t):
        return np.exp(-((np.asarray(x)[:, 0] - centre(t)) ** 2) / (2 * s2))

    def value(x, t):
        return p["base"] - p["amp"] * gauss(x, t)

    def rate(x, t):
        return -p["amp"] * gauss(x, t) * (np.asarray(x)[:, 0] - centre(t)) / s2 * p["speed"]

    return ForcingSampler(value, rate=rate, lower=lambda x: np.full(len(x), p["base"] - max(p["amp"], 0.0)),
                          name="moving")


def _low_regularity(p, extent, horizon):
    # ingestion only: no closed-form averages, derivative left to finite differences
    e = 1.0 - p["alpha"]
    reach = max(extent[0], horizon)

    def value(x, t):
        return -np.abs(np.asarray(x)[:, 0] - t) ** e

    return ForcingSampler(value, lower=lambda x: np.full(len(x), -reach ** e), name="low-regularity")


FORCING_BUILDERS = {
    "stationary": _stationary,
    "drifting": _drifting,
    "exp-relax": _exp_relax,
    "sinusoidal": _sinusoidal,
    "moving": _moving,
    "low-regularity": _low_regularity,
}


def make_forcing(name: str, params: dict[str, Any] | None, extent, horizon: float) -> ForcingSampler:
    if name not in FORCING_BUILDERS:
        raise KeyError(f"unknown forcing preset {name!r}; choose from {sorted(FORCING_BUILDERS)}")
    p = dict(FORCING_DEFAULTS[name])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise KeyError(f"forcing preset {name!r} has no parameter(s) {sorted(unknown)}")
    p.update({k: float(v) for k, v in (params or {}).items()})
    return FORCING_BUILDERS[name](p, tuple(extent), float(horizon))


def tabulated_forcing(ops: DiscreteOperators, times, values) -> ForcingSampler:
    """Piecewise-linear-in-time forcing from full-grid samples (nearest node in space)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n_grid = len(ops.grid_coords)
    if times.ndim != 1 or values.shape != (len(times), n_grid):
        raise ValueError(f"tabulated forcing needs values of shape ({len(times)}, {n_grid})")
    if np.any(np.diff(times) <= 0):
        raise ValueError("tabulated times must be strictly increasing")
    h = np.asarray(ops.spec.spacing)
    shape = ops.spec.nodes_per_axis

    def nodes_of(x):
        idx = np.rint(np.asarray(x) / h).astype(int)
        idx = np.clip(idx, 0, np.asarray(shape) - 1)
        return np.ravel_multi_index(idx.T, shape)

    def value(x, t):
        cols = values[:, nodes_of(x)]
        return np.array([np.interp(t, times, c) for c in cols.T])

    return ForcingSampler(value, name="tabulated")


INITIAL_DEFAULTS = {
    "zero": {},
    "equilibrium": {"obstacle": 0.0},
    "bump": {"amp": -0.05},
}


def make_initial(name: str, params: dict[str, Any] | None, ops: DiscreteOperators,
                 f: ForcingSampler, cfg: SolverConfig | None = None) -> np.ndarray:
    """``zero``; ``equilibrium`` (obstacle solve with psi = const, g = f(., 0), hence
    admissible); ``bump`` (amp * bump, admissibility not guaranteed)."""
    if name not in INITIAL_DEFAULTS:
        raise KeyError(f"unknown initial preset {name!r}; choose from {sorted(INITIAL_DEFAULTS)}")
    p = dict(INITIAL_DEFAULTS[name])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise KeyError(f"initial preset {name!r} has no parameter(s) {sorted(unknown)}")
    p.update({k: float(v) for k, v in (params or {}).items()})
    if name == "zero":
        return np.zeros(ops.n)
    if name == "bump":
        return p["amp"] * ops.interpolate(bump(ops.spec.extent))
    prob = ObstacleProblem(np.full(ops.n, p["obstacle"]), f(ops.coords, 0.0), ops)
    return obstacle.solve(prob, cfg).z


@dataclass
class Scenario:
    name: str
    ops: DiscreteOperators
    f: ForcingSampler
    z0: np.ndarray
    grid: TimeGrid
    forcing: str
    forcing_params: dict


def scenario(name: str, ops: DiscreteOperators, forcing: str, grid: TimeGrid,
             initial: str = "equilibrium", forcing_params=None, initial_params=None,
             cfg: SolverConfig | None = None) -> Scenario:
    rep = validate_problem(ops)
    if not rep.passed:
        raise ValueError(rep.data["message"])
    f = make_forcing(forcing, forcing_params, ops.spec.extent, grid.T)
    z0 = make_initial(initial, initial_params, ops, f, cfg)
    return Scenario(name, ops, f, z0, grid, forcing, dict(forcing_params or {}))


def mesh_1d(nodes=41, left="dirichlet", right="neumann", sigma=0.5, length=1.0):
    return build_mesh_and_operators(
        MeshSpec(1, (length,), (nodes,), {"left": left, "right": right}), sigma)


def mesh_2d(nodes=16, sigma=0.5, tags=None, extent=(1.0, 1.0)):
    tags = tags or {"left": "dirichlet", "bottom": "dirichlet", "right": "neumann", "top": "neumann"}
    return build_mesh_and_operators(MeshSpec(2, extent, (nodes, nodes), tags), sigma)


def reference_scenarios(m_1d: int = 64) -> dict[str, Scenario]:
    """The desk-scale scenarios every cross-cutting check runs on."""
    dd = mesh_1d(33, "dirichlet", "dirichlet", sigma=0.0)
    return {
        "1d_moving": scenario("1d_moving", mesh_1d(), "moving", TimeGrid(1.0, m_1d)),
        "2d_moving": scenario("2d_moving", mesh_2d(16), "moving", TimeGrid(1.0, 64)),
        "1d_drifting": scenario("1d_drifting", dd, "drifting", TimeGrid(1.0, m_1d),
                                forcing_params={"amp": 0.5}),
        "1d_exp_relax": scenario("1d_exp_relax", dd, "exp-relax", TimeGrid(4.0, m_1d),
                                 initial="zero"),
        "1d_stationary": scenario("1d_stationary", mesh_1d(), "stationary", TimeGrid(1.0, 32)),
        "2d_stationary": scenario("2d_stationary", mesh_2d(12), "stationary", TimeGrid(1.0, 16)),
    }
