"""Thin adapter to the HiGHS solver bundled with scipy.

Used as an optional node-LP engine for branch and bound and as an
independent reference solver in tests. It never replaces the bundled
branch-and-bound logic.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .problem import MilpProblem
from .simplex import LpOutcome

_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded", 4: "numerical"}


def _run(c, A, row_lo, row_hi, lb, ub, integrality, time_limit=None):
    constraints = []
    if A.shape[0]:
        constraints.append(LinearConstraint(A, row_lo, row_hi))
    options = {"presolve": True}
    if time_limit is not None and np.isfinite(time_limit):
        options["time_limit"] = float(time_limit)
    if not len(c):
        return "optimal", np.zeros(0), 0.0
    res = milp(c, constraints=constraints, bounds=Bounds(lb, ub), integrality=integrality, options=options)
    status = _STATUS.get(res.status, "numerical")
    if res.status == 1 and res.x is not None:
        status = "time-limit"
    if status == "infeasible" and "unbounded" in str(res.message).lower():
        status = "unbounded"
    return status, res.x, res.fun


def solve_lp_arrays(c, A, row_lo, row_hi, lb, ub, time_limit=None) -> LpOutcome:
    status, x, fun = _run(c, A, row_lo, row_hi, lb, ub, np.zeros(len(c)), time_limit)
    if status != "optimal":
        obj = {"infeasible": np.inf, "unbounded": -np.inf}.get(status, np.nan)
        return LpOutcome(status, None, obj)
    x = np.clip(np.asarray(x, float), lb, ub)
    return LpOutcome("optimal", x, float(np.asarray(c) @ x))


def solve_lp_highs(problem: MilpProblem) -> LpOutcome:
    lo, hi = problem.row_bounds()
    out = solve_lp_arrays(problem.objective, problem.matrix(), lo, hi, problem.lb, problem.ub)
    if out.ok:
        out.objective += problem.obj_constant
    return out


def solve_milp_highs(problem: MilpProblem, gap: float = 1e-9, time_limit: float | None = None):
    """Reference MILP solve. Returns ``(status, x, objective)``."""
    lo, hi = problem.row_bounds()
    c = problem.objective
    constraints = [LinearConstraint(problem.matrix(), lo, hi)] if problem.num_rows else []
    options = {"mip_rel_gap": gap}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(
        c, constraints=constraints, bounds=Bounds(problem.lb, problem.ub),
        integrality=problem.integrality.astype(int), options=options,
    )
    status = _STATUS.get(res.status, "numerical")
    if res.x is None:
        return status, None, np.inf if status == "infeasible" else np.nan
    return status, np.asarray(res.x), float(res.fun) + problem.obj_constant
