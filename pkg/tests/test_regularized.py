from __future__ import annotations

import numpy as np
import pytest

from irrevvi import obstacle, presets, regularized
from irrevvi.evolution import TimeGrid, average_forcing, run_minimizing_movement
from irrevvi.mesh_ops import norm
from irrevvi.obstacle import ObstacleProblem
from irrevvi.regularized import EpsRunConfig, run_regularized


@pytest.fixture(scope="module")
def small():
    ops = presets.mesh_1d(21)
    f = presets.make_forcing("moving", None, (1.0,), 1.0)
    z0 = presets.make_initial("equilibrium", None, ops, f)
    return ops, f, z0


def test_zero_epsilon_is_plain_scheme(small):
    ops, f, z0 = small
    grid = TimeGrid(1.0, 16)
    plain = run_minimizing_movement(z0, f, grid, ops)
    reg = run_regularized(EpsRunConfig(0.0, z0, f, grid, ops))
    assert np.array_equal(plain.snapshots, reg.snapshots)


def test_stationary_is_frozen_for_every_epsilon(scenarios):
    s = scenarios["1d_stationary"]
    rep = regularized.singular_limit_study([1.0, 0.25], s.z0, s.f, TimeGrid(1.0, 16), s.ops)
    assert rep.passed
    assert max(rep.data["distances"]) <= 1e-12


def test_regularized_step_against_oracle():
    ops = presets.mesh_1d(13)
    f = presets.make_forcing("moving", None, (1.0,), 1.0)
    z0 = presets.make_initial("equilibrium", None, ops, f)
    grid = TimeGrid(1.0, 4)
    eps = 0.1
    traj = run_regularized(EpsRunConfig(eps, z0, f, grid, ops))
    c = eps / grid.tau
    for k in range(1, 5):
        zp = traj.snapshots[k - 1]
        prob = ObstacleProblem(zp, average_forcing(f, grid, k, ops) + c * zp, ops, c)
        np.testing.assert_allclose(traj.snapshots[k], obstacle.solve_bruteforce(prob).z, atol=1e-10)
    assert np.all(np.diff(traj.snapshots, axis=0) <= 0)


def test_regularization_slows_the_evolution(small):
    ops, f, z0 = small
    grid = TimeGrid(1.0, 32)
    plain = run_minimizing_movement(z0, f, grid, ops)
    slow = run_regularized(EpsRunConfig(1.0, z0, f, grid, ops))
    assert np.all(slow.snapshots[-1] >= plain.snapshots[-1] - 1e-12)


def test_singular_limit_rate(small):
    ops, f, z0 = small
    rep = regularized.singular_limit_study([1, 1 / 4, 1 / 16, 1 / 64, 0], z0, f,
                                           TimeGrid(1.0, 256), ops)
    assert rep.passed, rep.to_dict()
    assert rep.data["slope"] >= 0.45


def test_mismatched_initial_data_plateaus(small):
    ops, f, z0 = small
    z0e = z0 - 0.02 * ops.interpolate(presets.bump((1.0,)))
    rep = regularized.singular_limit_study([1, 1 / 16, 1 / 64], z0, f, TimeGrid(1.0, 256), ops,
                                           z0_eps=z0e)
    gap = norm(ops, z0e - z0, "v")
    assert rep.data["plateau"] >= gap * (1 - 1e-12)
    assert rep.data["plateau"] <= 2 * gap


def test_bad_arguments(small):
    ops, f, z0 = small
    with pytest.raises(ValueError):
        EpsRunConfig(-1.0, z0, f, TimeGrid(1, 4), ops)
    with pytest.raises(ValueError, match="min"):
        regularized.singular_limit_study([1.0, 0.1], z0, f, TimeGrid(1.0, 8), ops)
    with pytest.raises(ValueError):
        regularized.singular_limit_study([0.0], z0, f, TimeGrid(1.0, 8), ops)
