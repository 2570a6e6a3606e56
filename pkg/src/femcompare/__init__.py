"""Lagrange and Raviart-Thomas mixed finite elements for the 2D Poisson problem."""

from .elements import FESpace, build_space
from .mesh import Mesh, load_mesh, load_star_mesh, mesh_h, parse_mfem_mesh, uniform_refine
from .postprocess import GridFunction
from .solvers import SolverConfig, cg_solve, minres_solve

__version__ = "0.1.0"

__all__ = [
    "FESpace",
    "GridFunction",
    "Mesh",
    "SolverConfig",
    "build_space",
    "cg_solve",
    "load_mesh",
    "load_star_mesh",
    "mesh_h",
    "minres_solve",
    "parse_mfem_mesh",
    "uniform_refine",
]
