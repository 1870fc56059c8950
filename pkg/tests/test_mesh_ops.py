from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from irrevvi import mesh_ops
from irrevvi.mesh_ops import MeshSpec, SolverError, build_mesh_and_operators, norm, solve_spd
from irrevvi.presets import mesh_1d, mesh_2d


def test_1d_dirichlet_stiffness_is_scaled_tridiagonal():
    ops = mesh_1d(5, "dirichlet", "dirichlet", sigma=0.0)
    h = 0.25
    expected = (np.diag([2.0] * 3) - np.diag([1.0] * 2, 1) - np.diag([1.0] * 2, -1)) / h
    np.testing.assert_allclose(ops.A.toarray(), expected, atol=1e-14)
    np.testing.assert_allclose(ops.mass, [h] * 3)


def test_lumped_mass_sums_to_volume():
    ops = mesh_2d(7, tags={f: "neumann" for f in ("left", "right", "bottom", "top")},
                  extent=(2.0, 0.5))
    assert ops.mass.sum() == pytest.approx(1.0, abs=1e-14)
    assert ops.mass.min() == pytest.approx(ops.mass.max() / 4)


def test_neumann_rows_annihilate_constants():
    ops = mesh_2d(6, sigma=1.0, tags={f: "neumann" for f in ("left", "right", "bottom", "top")})
    np.testing.assert_allclose(ops.A_full @ np.ones(36), 0.0, atol=1e-12)


def test_poisson_quadratic_dirichlet_dirichlet_is_exact():
    ops = mesh_1d(9, "dirichlet", "dirichlet", sigma=0.0)
    x = ops.coords[:, 0]
    u = solve_spd(ops.K, ops.mass * np.ones(ops.n))
    np.testing.assert_allclose(u, x * (1 - x) / 2, atol=1e-13)


def test_poisson_quadratic_with_neumann_end_is_exact():
    # -u'' = 1, u(0) = 0, u'(1) = 0 -> u = x - x^2/2; the half cell at x = 1 carries the flux
    ops = mesh_1d(11, "dirichlet", "neumann", sigma=0.0)
    x = ops.coords[:, 0]
    u = solve_spd(ops.K, ops.mass * np.ones(ops.n))
    np.testing.assert_allclose(u, x - x ** 2 / 2, atol=1e-13)


def test_poisson_2d_with_insulated_sides():
    tags = {"left": "dirichlet", "right": "dirichlet", "bottom": "neumann", "top": "neumann"}
    ops = mesh_2d(9, sigma=0.0, tags=tags)
    x = ops.coords[:, 0]
    u = solve_spd(ops.K, ops.mass * np.ones(ops.n))
    np.testing.assert_allclose(u, x * (1 - x) / 2, atol=1e-13)


def test_dirichlet_wins_at_corners():
    tags = {"left": "dirichlet", "right": "neumann", "bottom": "neumann", "top": "neumann"}
    ops = build_mesh_and_operators(MeshSpec(2, (1.0, 1.0), (4, 4), tags), 0.0)
    assert ops.dirichlet.reshape(4, 4)[0].all()
    assert ops.n == 12


def test_pure_neumann_without_mass_is_rejected():
    ops = mesh_1d(6, "neumann", "neumann", sigma=0.0)
    rep = mesh_ops.validate_problem(ops)
    assert not rep.passed
    assert "assumption (i)" in rep.data["message"]
    assert mesh_ops.validate_problem(mesh_1d(6, "neumann", "neumann", sigma=0.1)).passed


@pytest.mark.parametrize("bad", [
    MeshSpec(3, (1.0,) * 3, (3,) * 3, {}),
    MeshSpec(1, (0.0,), (5,), {"left": "dirichlet", "right": "dirichlet"}),
    MeshSpec(1, (1.0,), (2,), {"left": "dirichlet", "right": "dirichlet"}),
    MeshSpec(1, (1.0,), (5,), {"left": "dirichlet"}),
    MeshSpec(1, (1.0,), (5,), {"left": "robin", "right": "dirichlet"}),
])
def test_degenerate_specs_raise(bad):
    with pytest.raises(ValueError):
        build_mesh_and_operators(bad, 1.0)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        mesh_1d(5, sigma=-1.0)


def test_norm_duality():
    ops = mesh_2d(7)
    u = np.random.default_rng(0).normal(size=ops.n)
    assert norm(ops, ops.B @ u, "vstar") == pytest.approx(norm(ops, u, "v"), rel=1e-10)
    assert norm(ops, np.ones(ops.n), "l2") ** 2 == pytest.approx(ops.mass.sum())
    with pytest.raises(ValueError):
        norm(ops, u, "h2")


def test_vstar_weaker_than_l2():
    ops = mesh_1d(21)
    u = np.random.default_rng(1).normal(size=ops.n)
    assert norm(ops, ops.mass * u, "vstar") <= norm(ops, u, "l2") * (1 + 1e-12)


def test_solve_spd_reports_failure_instead_of_partial_answer():
    ops = mesh_1d(101, "dirichlet", "dirichlet", sigma=0.0)
    rhs = ops.mass * np.ones(ops.n)
    with pytest.raises(SolverError) as info:
        solve_spd(ops.K, rhs, max_iter=3)
    assert info.value.residual > 1e-12
    np.testing.assert_array_equal(solve_spd(ops.K, np.zeros(ops.n)), 0.0)


def test_grid_labels():
    assert mesh_ops.grid_labels(mesh_1d(4).spec) == ["x0", "x1", "x2", "x3"]
    labels = mesh_ops.grid_labels(mesh_2d(3).spec)
    assert labels[:4] == ["node_0_0", "node_0_1", "node_0_2", "node_1_0"]


def test_grid_roundtrip():
    ops = mesh_2d(5)
    u = np.arange(ops.n, dtype=float)
    np.testing.assert_array_equal(ops.from_grid(ops.to_grid(u)), u)
    assert np.all(ops.to_grid(u)[ops.dirichlet] == 0)


faces = st.sampled_from(["dirichlet", "neumann"])


@settings(max_examples=40, deadline=None)
@given(dim=st.integers(1, 2), n=st.integers(3, 7), sigma=st.floats(0.05, 3.0),
       tags=st.lists(faces, min_size=4, max_size=4), lx=st.floats(0.3, 3.0))
def test_operator_is_symmetric_m_matrix(dim, n, sigma, tags, lx):
    names = mesh_ops.FACES[dim]
    spec = MeshSpec(dim, (lx,) * dim, (n,) * dim, dict(zip(names, tags)))
    ops = build_mesh_and_operators(spec, sigma)
    K = ops.K.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    off = K - np.diag(np.diag(K))
    assert np.all(off <= 0)
    assert np.linalg.eigvalsh(K).min() > 0
    assert np.all(np.linalg.inv(K) >= -1e-12)
    assert sp.issparse(ops.B)
