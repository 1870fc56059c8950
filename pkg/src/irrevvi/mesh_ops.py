"""Tensor grids, finite-difference operators and the norms built on them.

Nodes sit on a uniform tensor grid over ``[0, L_1] x ... x [0, L_d]`` (d = 1, 2).
Dirichlet nodes are eliminated, so every vector handled by the rest of the
package lives on the *free* nodes only.  The stiffness matrix is assembled
edge by edge::

    A = sum_e  w_e (e_i - e_j)(e_i - e_j)^T,   w_e = |dual face| / h

with the dual face halved on boundary lines.  Combined with the lumped mass
(cell volumes, halved at boundary nodes, quartered at corners) this is exactly
the 3-point / 5-point stencil with ghost-reflection Neumann conditions, scaled
by the nodal cell volume.  Rows of the full matrix sum to zero, off-diagonals
are non-positive, and ``K = A + sigma*M`` is an M-matrix once it is
non-singular.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .reports import Report

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

FACES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}
# (axis, side) for each face name; side 0 = low end, 1 = high end
_FACE_AXIS = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}

CG_REL_TOL = 1e-12


class SolverError(RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class MeshSpec:
    dim: int
    extent: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    boundary_tags: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "nodes_per_axis", tuple(int(n) for n in self.nodes_per_axis))
        tags = {k: str(v).lower() for k, v in dict(self.boundary_tags).items()}
        object.__setattr__(self, "boundary_tags", MappingProxyType(tags))

    def validate(self) -> None:
        if self.dim not in FACES:
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.extent) != self.dim or len(self.nodes_per_axis) != self.dim:
            raise ValueError("extent and nodes_per_axis need one entry per axis")
        if any(not np.isfinite(e) or e <= 0 for e in self.extent):
            raise ValueError(f"degenerate extent {self.extent}")
        if any(n < 3 for n in self.nodes_per_axis):
            raise ValueError(f"need at least 3 nodes per axis, got {self.nodes_per_axis}")
        faces = set(FACES[self.dim])
        missing = faces - set(self.boundary_tags)
        extra = set(self.boundary_tags) - faces
        if missing or extra:
            raise ValueError(f"boundary_tags must name exactly {sorted(faces)}; "
                             f"missing {sorted(missing)}, unexpected {sorted(extra)}")
        for face, tag in self.boundary_tags.items():
            if tag not in (DIRICHLET, NEUMANN):
                raise ValueError(f"face {face!r}: tag must be dirichlet or neumann, got {tag!r}")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.extent, self.nodes_per_axis))


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Assembled operators restricted to the free (non-Dirichlet) nodes.

    ``mass`` is the diagonal of the lumped mass matrix; ``M`` is the same
    thing as a sparse matrix.  ``K`` is ``A + sigma*M`` and ``B`` is ``A + M``.
    """

    spec: MeshSpec
    sigma: float
    grid_coords: np.ndarray  # (n_nodes, dim), all grid nodes, C order
    dirichlet: np.ndarray  # bool mask over all grid nodes
    free: np.ndarray  # indices of free nodes into the full grid
    A_full: sp.csr_matrix
    A: sp.csr_matrix
    mass: np.ndarray
    K: sp.csr_matrix
    B: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.free)

    @property
    def coords(self) -> np.ndarray:
        return self.grid_coords[self.free]

    @property
    def M(self) -> sp.dia_matrix:
        return sp.diags(self.mass, format="csr")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.nodes_per_axis

    def operator(self, extra_mass: float = 0.0) -> sp.csr_matrix:
        """``K + c*M``; returns ``K`` itself when ``c == 0``."""
        if extra_mass == 0.0:
            return self.K
        key = ("K+cM", float(extra_mass))
        if key not in self._cache:
            self._cache[key] = (self.K + sp.diags(extra_mass * self.mass)).tocsr()
        return self._cache[key]

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        """Scatter free-node values onto the full grid (zeros on Dirichlet nodes)."""
        out = np.zeros(len(self.grid_coords))
        out[self.free] = _check_field(self, values)
        return out

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.grid_coords),):
            raise ValueError(f"expected {len(self.grid_coords)} grid values, got {values.shape}")
        return values[self.free].copy()

    def interpolate(self, func) -> np.ndarray:
        """Evaluate ``func(coords)`` on the free nodes."""
        return np.asarray(func(self.coords), dtype=float).reshape(self.n).copy()


def _edge_weights_axis(spec: MeshSpec, axis: int):
    """Yield (flat_i, flat_j, weight) for grid edges along ``axis``."""
    shape = spec.nodes_per_axis
    h = spec.spacing
    idx = np.indices(shape).reshape(spec.dim, -1).T
    lo = idx[idx[:, axis] < shape[axis] - 1]
    hi = lo.copy()
    hi[:, axis] += 1
    weight = np.full(len(lo), 1.0 / h[axis])
    for other in range(spec.dim):
        if other == axis:
            continue
        at_bnd = (lo[:, other] == 0) | (lo[:, other] == shape[other] - 1)
        weight *= np.where(at_bnd, 0.5 * h[other], h[other])
    i = np.ravel_multi_index(lo.T, shape)
    j = np.ravel_multi_index(hi.T, shape)
    return i, j, weight


def _lumped_mass(spec: MeshSpec) -> np.ndarray:
    shape = spec.nodes_per_axis
    mass = np.ones(shape)
    for axis, (n, h) in enumerate(zip(shape, spec.spacing)):
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        view = [np.newaxis] * spec.dim
        view[axis] = slice(None)
        mass = mass * w[tuple(view)]
    return mass.ravel()


def _dirichlet_mask(spec: MeshSpec) -> np.ndarray:
    shape = spec.nodes_per_axis
    mask = np.zeros(shape, dtype=bool)
    for face, tag in spec.boundary_tags.items():
        if tag != DIRICHLET:
            continue
        axis, side = _FACE_AXIS[face]
        sl = [slice(None)] * spec.dim
        sl[axis] = 0 if side == 0 else shape[axis] - 1
        # corners shared with a Neumann face stay Dirichlet
        mask[tuple(sl)] = True
    return mask.ravel()


def build_mesh_and_operators(spec: MeshSpec, sigma: float = 0.0) -> DiscreteOperators:
    spec.validate()
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be a finite non-negative number, got {sigma}")
    shape = spec.nodes_per_axis
    n_nodes = int(np.prod(shape))

    rows, cols, vals = [], [], []
    for axis in range(spec.dim):
        i, j, w = _edge_weights_axis(spec, axis)
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [w, w, -w, -w]
    A_full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes),
    ).tocsr()
    A_full.sum_duplicates()

    axes = [np.linspace(0.0, L, n) for L, n in zip(spec.extent, shape)]
    grid_coords = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)

    dirichlet = _dirichlet_mask(spec)
    free = np.flatnonzero(~dirichlet)
    mass = _lumped_mass(spec)[free]
    A = A_full[free][:, free].tocsr()
    A.sort_indices()
    M = sp.diags(mass)
    K = (A + sigma * M).tocsr() if sigma != 0.0 else A.copy()
    B = (A + M).tocsr()
    return DiscreteOperators(spec, sigma, grid_coords, dirichlet, free, A_full, A, mass, K, B)


def validate_problem(ops: DiscreteOperators) -> Report:
    """Is ``K`` positive definite?  (sigma > 0, or at least one Dirichlet node.)"""
    rep = Report("validate_problem")
    n_dir = int(ops.dirichlet.sum())
    ok = ops.sigma > 0 or n_dir > 0
    if ok:
        msg = f"K_sigma positive definite (sigma={ops.sigma}, dirichlet nodes={n_dir})"
    else:
        msg = ("assumption (i) violated: sigma must be > 0 when the Dirichlet boundary is "
               "empty (K_sigma is singular on constants)")
    rep.add("coercivity", ok, message=msg, sigma=ops.sigma, dirichlet_nodes=n_dir)
    rep.add("free_dofs", ops.n > 0, value=ops.n)
    rep.data["message"] = msg
    return rep


def _check_field(ops: DiscreteOperators, values, name: str = "field") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (ops.n,):
        raise ValueError(f"{name} has shape {values.shape}, mesh has {ops.n} free dofs")
    return values


def solve_spd(mat: sp.spmatrix, rhs: np.ndarray, rel_tol: float = CG_REL_TOL,
              max_iter: int | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Jacobi-preconditioned CG; raises :class:`SolverError` rather than return a partial answer."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"matrix {mat.shape} does not match rhs of length {n}")
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n)
    max_iter = 20 * n if max_iter is None else max_iter
    diag = mat.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    precond = spla.LinearOperator((n, n), matvec=lambda r: r / diag, dtype=float)
    x, info = spla.cg(mat, rhs, x0=x0, rtol=rel_tol, atol=0.0, maxiter=max_iter, M=precond)
    res = np.linalg.norm(rhs - mat @ x) / bnorm
    # scipy stops on the recursive residual; re-check the true one with a little slack
    if info != 0 or res > 10 * rel_tol:
        raise SolverError(f"CG failed: relative residual {res:.3e} > {rel_tol:.1e} "
                          f"after {max_iter if info > 0 else info} iterations",
                          residual=res, iterations=max_iter)
    return x


def norm(ops: DiscreteOperators, arg: np.ndarray, kind: str) -> float:
    """L2 / V norms of a field, or the V* norm of a load vector."""
    u = _check_field(ops, arg)
    kind = kind.lower()
    if kind == "l2":
        return float(np.sqrt(max(u @ (ops.mass * u), 0.0)))
    if kind == "v":
        return float(np.sqrt(max(u @ (ops.B @ u), 0.0)))
    if kind in ("vstar", "v*"):
        if not np.any(u):
            return 0.0
        w = solve_spd(ops.B, u)
        return float(np.sqrt(max(u @ w, 0.0)))
    raise ValueError(f"unknown norm kind {kind!r}")


def load_vector(ops: DiscreteOperators, g: np.ndarray) -> np.ndarray:
    """Functional represented by a nodal L2 field: ``M g``."""
    return ops.mass * _check_field(ops, g)


def nodal_elliptic_residual(z: np.ndarray, ops: DiscreteOperators,
                            extra_mass: float = 0.0) -> np.ndarray:
    """Nodal values of ``-Lap z + sigma z`` (plus ``c z``): ``M^{-1} (K + cM) z``."""
    z = _check_field(ops, z)
    return (ops.operator(extra_mass) @ z) / ops.mass


def pointwise_min(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.minimum(a, b)


def grid_labels(spec: MeshSpec) -> list[str]:
    """Column labels for every grid node, in flat (C) order."""
    if spec.dim == 1:
        return [f"x{i}" for i in range(spec.nodes_per_axis[0])]
    return [f"node_{i}_{j}" for i, j in itertools.product(*(range(n) for n in spec.nodes_per_axis))]
