"""LP construction, parametric solving, evaluation and LP-file export."""

from .lp import Affine, Constraint, LpModel, Minimize, Tolerance, build_lp
from .lpformat import GenericLp, export_lp, parse_lp, read_lp, solve_external, to_generic
from .solve import (SolveReport, evaluate, feasibility_range, makespan, solve,
                    tolerance_value)

__all__ = [
    "Affine", "Constraint", "GenericLp", "LpModel", "Minimize", "SolveReport", "Tolerance",
    "build_lp", "evaluate", "export_lp", "feasibility_range", "makespan", "parse_lp",
    "read_lp", "solve", "solve_external", "to_generic", "tolerance_value",
]
