"""Modified BFGS family: full memory, limited memory, and limited memory with
displacement aggregation."""
from .errors import (AggMBFGSError, AggregationFailure, DegenerateCurvature, InvalidDimension,
                     LineSearchFailure, NotDescent, UnknownProblem)
from .problems import Problem, catalog, fd_gradient_check, make_problem
from .qn_core import (CurvaturePair, DisplacementStore, mbfgs_compact, mbfgs_iterative,
                      modified_displacement, two_loop_direction)
from .aggregation import aggregate_pair, drop_parallel_pair
from .solver import SolveResult, SolverConfig, Status, Variant, minimize, step_store_update

__version__ = "0.1.0"

__all__ = [
    "AggMBFGSError", "AggregationFailure", "DegenerateCurvature", "InvalidDimension",
    "LineSearchFailure", "NotDescent", "UnknownProblem",
    "Problem", "catalog", "fd_gradient_check", "make_problem",
    "CurvaturePair", "DisplacementStore", "mbfgs_compact", "mbfgs_iterative",
    "modified_displacement", "two_loop_direction",
    "aggregate_pair", "drop_parallel_pair",
    "SolveResult", "SolverConfig", "Status", "Variant", "minimize", "step_store_update",
]
