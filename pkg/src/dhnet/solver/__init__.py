from .problem import Constraint, MilpProblem
from .simplex import LpOutcome, SimplexOptions, solve_lp
from .bnb import MilpOutcome, SolveParams, relative_gap, solve_milp

__all__ = [
    "Constraint",
    "MilpProblem",
    "LpOutcome",
    "SimplexOptions",
    "solve_lp",
    "MilpOutcome",
    "SolveParams",
    "relative_gap",
    "solve_milp",
]
