"""Discrete irreversible evolutionary variational inequalities."""

from .evolution import ForcingSampler, TimeGrid, Trajectory, run_minimizing_movement
from .mesh_ops import DiscreteOperators, MeshSpec, build_mesh_and_operators, norm, validate_problem
from .obstacle import ObstacleProblem, SolverConfig, solve
from .reports import Report

__all__ = [
    "DiscreteOperators", "ForcingSampler", "MeshSpec", "ObstacleProblem", "Report",
    "SolverConfig", "TimeGrid", "Trajectory", "build_mesh_and_operators", "norm",
    "run_minimizing_movement", "solve", "validate_problem",
]

__version__ = "0.1.0"
