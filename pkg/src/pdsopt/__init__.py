"""Two-level shape optimization of piecewise developable shell surfaces.

The lower level moves free grid heights to make the surface piecewise
developable; the upper level anneals a few design heights to minimize the
shell compliance of the resulting shape.
"""
from .anneal import AnnealConfig, DesignEvaluator, DesignVector, anneal, propose_move
from .devmap import DevObjectiveConfig, gauss_map_report, objective, objective_gradient
from .errors import (ConfigError, DegenerateTriangleError, GridError, NumericalError, PdsError,
                     SingularStiffnessError, SolverError)
from .fem import FemModel, ShellMaterial, assemble_and_solve, compliance, principal_moments
from .grid import BaseSurfaceSpec, GridSurface, Role, build_base_surface, classify_points, neighbor_fan
from .nlp import BoundsSpec, NlpSettings, minimize_bounded, solve_lower_level

__version__ = "0.1.0"
