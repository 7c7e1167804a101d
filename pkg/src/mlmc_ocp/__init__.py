"""Multilevel Monte Carlo for elliptic optimal control with a lognormal coefficient."""

from ._kernels import BACKEND
from .errors import ConfigError, SolverError
from .mesh import MeshHierarchy, TriMesh, build_initial_mesh, prolong, refine_uniform
from .ocp import DesiredState, OCPConfig, PathwiseSolution, solve_pathwise
from .randfield import PAPER_BASIS, CoefficientSample, KLBasis, draw_sample, make_basis

__all__ = [
    "BACKEND",
    "ConfigError",
    "SolverError",
    "MeshHierarchy",
    "TriMesh",
    "build_initial_mesh",
    "prolong",
    "refine_uniform",
    "DesiredState",
    "OCPConfig",
    "PathwiseSolution",
    "solve_pathwise",
    "PAPER_BASIS",
    "CoefficientSample",
    "KLBasis",
    "draw_sample",
    "make_basis",
]
