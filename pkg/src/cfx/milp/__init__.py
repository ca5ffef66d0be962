"""Self-contained LP/MILP representation and solver."""

from .branch_bound import SolverOptions, optimize_variable, solve_lp, solve_milp
from .lp_format import export_lp, parse_lp
from .model import (
    LinearConstraint,
    MilpModel,
    Sense,
    SolveOutcome,
    SolveStatus,
    VariableDef,
    VarKind,
    constraint_violation,
)

__all__ = [
    "LinearConstraint",
    "MilpModel",
    "Sense",
    "SolveOutcome",
    "SolveStatus",
    "SolverOptions",
    "VariableDef",
    "VarKind",
    "constraint_violation",
    "export_lp",
    "optimize_variable",
    "parse_lp",
    "solve_lp",
    "solve_milp",
]
