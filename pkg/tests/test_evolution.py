from __future__ import annotations

import numpy as np
import pytest

from irrevvi import evolution, obstacle, presets
from irrevvi.evolution import ForcingSampler, StepError, TimeGrid, run_minimizing_movement
from irrevvi.mesh_ops import norm
from irrevvi.obstacle import ObstacleProblem, SolverConfig


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.tau == 0.25
    assert g.times[-1] == 2.0 and len(g.times) == 9
    for bad in [(1.0, 0), (0.0, 4), (-1.0, 4), (float("inf"), 4)]:
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_gauss_average_matches_closed_form_average():
    ops = presets.mesh_1d(11)
    f = presets.make_forcing("sinusoidal", {"freq": 3.0}, (1.0,), 1.0)
    exact = f.average(ops.coords, 0.2, 0.3)
    np.testing.assert_allclose(evolution.gauss_average(f, ops.coords, 0.2, 0.3), exact, atol=1e-9)


def test_first_average_is_initial_value():
    ops = presets.mesh_1d(11)
    f = presets.make_forcing("drifting", {"amp": 1.0}, (1.0,), 1.0)
    np.testing.assert_array_equal(evolution.average_forcing(f, TimeGrid(1, 4), 0, ops), f(ops.coords, 0))


def test_inadmissible_initial_rejected():
    ops = presets.mesh_1d(21)
    f = presets.make_forcing("stationary", None, (1.0,), 1.0)
    # rho(5 bump) is about 5 (pi^2 + sigma) mid-domain, far above f(., 0)
    z0 = 5.0 * ops.interpolate(presets.bump((1.0,)))
    with pytest.raises(ValueError, match="admissible"):
        run_minimizing_movement(z0, f, TimeGrid(1, 4), ops)


def test_stationary_forcing_freezes_state(scenarios):
    for name in ("1d_stationary", "2d_stationary"):
        s = scenarios[name]
        traj = run_minimizing_movement(s.z0, s.f, s.grid, s.ops)
        assert max(norm(s.ops, z - s.z0, "v") for z in traj.snapshots) <= 1e-9


def test_irreversibility_and_complementarity(scenarios):
    s = scenarios["1d_moving"]
    traj = run_minimizing_movement(s.z0, s.f, s.grid, s.ops)
    assert np.all(np.diff(traj.snapshots, axis=0) <= 0)
    assert max(d["residual"] for d in traj.diagnostics) <= 1e-10
    assert traj.snapshots[-1].min() < traj.snapshots[0].min()  # it actually moved


def test_single_step_equals_obstacle_oracle():
    ops = presets.mesh_1d(13, "dirichlet", "neumann")
    f = presets.make_forcing("moving", None, (1.0,), 1.0)
    z0 = presets.make_initial("equilibrium", None, ops, f)
    grid = TimeGrid(1.0, 4)
    traj = run_minimizing_movement(z0, f, grid, ops)
    for k in range(1, 5):
        prob = ObstacleProblem(traj.snapshots[k - 1], evolution.average_forcing(f, grid, k, ops), ops)
        np.testing.assert_allclose(traj.snapshots[k], obstacle.solve_bruteforce(prob).z, atol=1e-10)


def test_stride_thins_snapshots(scenarios):
    s = scenarios["1d_moving"]
    full = run_minimizing_movement(s.z0, s.f, TimeGrid(1, 16), s.ops)
    thin = run_minimizing_movement(s.z0, s.f, TimeGrid(1, 16), s.ops, stride=5)
    assert list(thin.steps) == [0, 5, 10, 15, 16]
    np.testing.assert_array_equal(thin.z(10), full.z(10))
    with pytest.raises(KeyError):
        thin.z(3)
    with pytest.raises(ValueError):
        evolution.apriori_report(thin, s.f)


def test_step_failure_carries_step_index(scenarios):
    s = scenarios["1d_moving"]
    with pytest.raises(StepError) as info:
        run_minimizing_movement(s.z0, s.f, s.grid, s.ops, SolverConfig("psor", omega=0.5, max_iter=1))
    assert info.value.step >= 1


def test_interpolants(scenarios):
    s = scenarios["1d_moving"]
    traj = run_minimizing_movement(s.z0, s.f, TimeGrid(1, 8), s.ops)
    tau = traj.grid.tau
    np.testing.assert_array_equal(evolution.eval_interpolant(traj, 0.0, "constant"), traj.z(0))
    mid = evolution.eval_interpolant(traj, 2.5 * tau, "linear")
    np.testing.assert_allclose(mid, 0.5 * (traj.z(2) + traj.z(3)))
    np.testing.assert_array_equal(evolution.eval_interpolant(traj, 2.5 * tau, "constant"), traj.z(3))
    np.testing.assert_array_equal(evolution.eval_interpolant(traj, 3 * tau, "constant"), traj.z(3))
    gap = evolution.interpolant_gap(traj)
    assert gap == pytest.approx(max(norm(s.ops, traj.z(k) - traj.z(k - 1), "v") for k in range(1, 9)))
    with pytest.raises(ValueError):
        evolution.eval_interpolant(traj, 2.0)


def test_lewy_stampacchia_chain_on_reference_runs(scenarios):
    for s in scenarios.values():
        traj = run_minimizing_movement(s.z0, s.f, s.grid, s.ops)
        rep = evolution.apriori_report(traj, s.f)
        assert rep.passed, (s.name, [c.to_dict() for c in rep.failures()])


def test_dual_rate_integral_for_uniform_drift():
    # d/dt f = -1 everywhere, so the integral is T * ||M 1||_{V*}^2
    ops = presets.mesh_1d(9)
    f = presets.make_forcing("drifting", None, (1.0,), 2.0)
    val, approx = evolution.dual_rate_sq_integral(f, TimeGrid(2.0, 4), ops)
    assert not approx
    assert val == pytest.approx(2.0 * norm(ops, ops.mass, "vstar") ** 2, rel=1e-12)


def test_finite_difference_rate_is_flagged():
    ops = presets.mesh_1d(9)
    f = ForcingSampler(lambda x, t: np.sin(t) * x[:, 0])
    val, approx = evolution.dual_rate_sq_integral(f, TimeGrid(1.0, 4), ops)
    assert approx and val > 0


def test_forcing_interpolation_sinusoidal():
    ops = presets.mesh_1d(21)
    f = presets.make_forcing("sinusoidal", None, (1.0,), 1.0)
    rep = evolution.forcing_interpolation_check(f, TimeGrid(1.0, 8), ops, ladder=[8, 16, 32, 64])
    assert rep.passed
    gaps = rep.data["gaps"]
    # first-order convergence of the piecewise-constant interpolant
    assert gaps[-1] / gaps[0] == pytest.approx(1 / 8, rel=0.05)
