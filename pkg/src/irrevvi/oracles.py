"""Randomized small obstacle problems checked against active-set enumeration."""

from __future__ import annotations

import numpy as np

from . import obstacle
from .mesh_ops import DIRICHLET, FACES, NEUMANN, MeshSpec, build_mesh_and_operators
from .obstacle import ObstacleProblem, SolverConfig
from .reports import Report

PSOR_TOL = 1e-8
PDAS_TOL = 1e-10


def random_instance(rng: np.random.Generator, max_n: int = 12) -> ObstacleProblem:
    """Random 1D/2D mesh with mixed tags, sigma > 0, random psi and mixed-sign g.

    Half of the instances carry a positive extra mass with ``psi`` playing the
    role of the previous step, i.e. a regularized time step.
    """
    dim = int(rng.integers(1, 3))
    while True:
        if dim == 1:
            nodes = (int(rng.integers(3, max_n + 3)),)
        else:
            side = int(rng.integers(3, 6))
            nodes = (side, int(rng.integers(3, 6)))
        tags = {face: (DIRICHLET if rng.random() < 0.5 else NEUMANN) for face in FACES[dim]}
        extent = tuple(float(rng.uniform(0.5, 2.0)) for _ in range(dim))
        ops = build_mesh_and_operators(MeshSpec(dim, extent, nodes, tags),
                                       float(rng.uniform(0.1, 2.0)))
        if 1 <= ops.n <= max_n:
            break
    psi = rng.normal(0.0, 1.0, ops.n)
    g = rng.uniform(-5.0, 5.0, ops.n)
    c = float(rng.uniform(0.5, 20.0)) if rng.random() < 0.5 else 0.0
    if c:
        g = g + c * psi
    return ObstacleProblem(psi, g, ops, c)


def oracle_suite(seed: int = 42, instances: int = 200, max_n: int = 12) -> Report:
    rng = np.random.default_rng(seed)
    psor_cfg = SolverConfig(method=obstacle.PSOR, omega=1.2, tol=1e-10)
    pdas_cfg = SolverConfig(method=obstacle.PDAS, tol=1e-10)
    worst_psor = worst_pdas = 0.0
    agree = 0
    failures = []
    for i in range(instances):
        prob = random_instance(rng, max_n)
        ref = obstacle.solve_bruteforce(prob).z
        e_psor = float(np.max(np.abs(obstacle.solve(prob, psor_cfg).z - ref)))
        e_pdas = float(np.max(np.abs(obstacle.solve(prob, pdas_cfg).z - ref)))
        worst_psor, worst_pdas = max(worst_psor, e_psor), max(worst_pdas, e_pdas)
        if e_psor <= PSOR_TOL and e_pdas <= PDAS_TOL:
            agree += 1
        else:
            failures.append({"instance": i, "n": prob.ops.n, "psor": e_psor, "pdas": e_pdas})
    rep = Report("oracle_check")
    rep.data.update(seed=seed, instances=instances, agreed=agree, failures=failures)
    rep.add("psor_vs_bruteforce", worst_psor <= PSOR_TOL, worst_psor, PSOR_TOL)
    rep.add("pdas_vs_bruteforce", worst_pdas <= PDAS_TOL, worst_pdas, PDAS_TOL)
    return rep
