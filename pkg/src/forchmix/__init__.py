"""Mixed finite-element solver for Darcy-Forchheimer gas flow in porous media.

Fluxes live on the edges of a structured rectangular mesh (lowest-order
Raviart-Thomas), the pressure-squared variable ``S`` is cellwise constant.
"""

from .assembly import CoefficientField, MixedSystem, linearize, residual
from .errors import (ConditioningError, ContinuationError, ContractError, DomainError, IngestionError,
                     NonConvergenceError, StagnationError)
from .grid import BoundaryData, FluxField, Mesh, ScalarField, build_structured_mesh
from .kernel import ClosureParams, f_closure, g_closure, rho
from .stationary import ContinuationSchedule, SolveReport, solve_homogeneous_divfree, solve_regularized, solve_stationary
from .transient import BoundMonitor, TimeGrid, TransientProblem, check_dt_admissible, run, step

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "MixedSystem", "linearize", "residual",
    "ConditioningError", "ContinuationError", "ContractError", "DomainError", "IngestionError",
    "NonConvergenceError", "StagnationError",
    "BoundaryData", "FluxField", "Mesh", "ScalarField", "build_structured_mesh",
    "ClosureParams", "f_closure", "g_closure", "rho",
    "ContinuationSchedule", "SolveReport", "solve_homogeneous_divfree", "solve_regularized", "solve_stationary",
    "BoundMonitor", "TimeGrid", "TransientProblem", "check_dt_admissible", "run", "step",
]
