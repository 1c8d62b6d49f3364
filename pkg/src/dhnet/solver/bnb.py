"""Best-bound branch and bound over the bundled simplex."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .highs import solve_lp_arrays, solve_milp_highs
from .problem import MilpProblem
from .simplex import BoundedSimplex, LpOutcome, SimplexOptions, WarmStart

logger = logging.getLogger(__name__)


@dataclass
class SolveParams:
    gap: float = 1e-4
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    time_limit: float = 600.0
    node_limit: int | None = None
    deterministic: bool = True
    lp_engine: str = "simplex"  # simplex | highs
    log_every: int = 0
    # "highs" hands the whole MILP to HiGHS instead of the branch and bound below
    milp_engine: str = "bundled"

    def __post_init__(self):
        for name in ("gap", "int_tol", "feas_tol", "time_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lp_engine not in ("simplex", "highs"):
            raise ValueError(f"unknown lp engine {self.lp_engine!r}")
        if self.milp_engine not in ("bundled", "highs"):
            raise ValueError(f"unknown milp engine {self.milp_engine!r}")


@dataclass
class NodeRecord:
    node: int
    depth: int
    lp_bound: float
    incumbent: float
    best_bound: float


@dataclass
class MilpOutcome:
    status: str  # optimal | feasible-with-gap | infeasible | unbounded | node-limit | time-limit | numerical
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    lp_iterations: int = 0
    trace: list[NodeRecord] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(0.0, (incumbent - bound) / max(1e-10, abs(incumbent)))


class _LpEngine:
    def __init__(self, problem: MilpProblem, params: SolveParams):
        self.kind = params.lp_engine
        self.A = problem.matrix()
        self.c = problem.objective
        self.row_lo, self.row_hi = problem.row_bounds()
        self.params = params
        if self.kind == "simplex":
            self.simplex = BoundedSimplex(
                self.A, self.c, self.row_lo, self.row_hi, problem.lb, problem.ub,
                SimplexOptions(feas_tol=params.feas_tol),
            )
        self.iterations = 0

    def solve(self, lb: np.ndarray, ub: np.ndarray, start: WarmStart | None, time_left: float) -> LpOutcome:
        if np.any(lb > ub + self.params.feas_tol):
            return LpOutcome("infeasible", None, math.inf)
        if self.kind == "highs":
            return solve_lp_arrays(self.c, self.A, self.row_lo, self.row_hi, lb, ub, time_left)
        s = self.simplex
        s.set_bounds(lb, ub)
        s.opt.time_limit = max(time_left, 1e-3)
        out = s.solve(start=start, use_dual=start is not None)
        self.iterations += out.iterations
        return out


def _fractionality(x: np.ndarray, int_idx: np.ndarray) -> np.ndarray:
    v = x[int_idx]
    return np.abs(v - np.round(v))


def solve_milp(problem: MilpProblem, params: SolveParams | None = None) -> MilpOutcome:
    """Minimise ``problem`` by LP-based branch and bound.

    Nodes are explored best-bound first; ties go to the deeper node, then to
    the lower node id. The branching variable is the most fractional integer
    variable (lowest index on ties). A single rounding heuristic runs at the
    root.
    """
    params = params or SolveParams()
    if params.milp_engine == "highs":
        return _solve_with_highs(problem, params)
    t0 = time.perf_counter()
    deadline = t0 + params.time_limit
    int_idx = np.flatnonzero(problem.integrality)
    engine = _LpEngine(problem, params)
    lb0, ub0 = problem.lb, problem.ub
    lb0[int_idx] = np.ceil(lb0[int_idx] - params.int_tol)
    ub0[int_idx] = np.floor(ub0[int_idx] + params.int_tol)
    const = problem.obj_constant

    def finish(status, x, obj, bound, nodes, trace):
        gap = relative_gap(obj, bound) if x is not None else math.inf
        if x is not None:
            obj += const
            bound += const
        elif math.isfinite(bound):
            bound += const
        return MilpOutcome(
            status, x, obj, bound, gap, nodes, time.perf_counter() - t0, engine.iterations, trace
        )

    root = engine.solve(lb0, ub0, None, deadline - time.perf_counter())
    if root.status in ("infeasible", "unbounded", "numerical"):
        return finish(root.status, None, math.inf if root.status == "infeasible" else math.nan,
                      math.inf if root.status == "infeasible" else -math.inf, 1, [])
    if not root.ok:
        return finish("time-limit", None, math.nan, -math.inf, 1, [])
    if int_idx.size == 0:
        return finish("optimal", root.x, root.objective, root.objective, 1,
                      [NodeRecord(0, 0, root.objective, root.objective, root.objective)])

    inc_x: np.ndarray | None = None
    inc_obj = math.inf

    def consider(x: np.ndarray, obj: float) -> None:
        nonlocal inc_x, inc_obj
        if obj < inc_obj - 1e-12:
            xr = x.copy()
            xr[int_idx] = np.round(xr[int_idx])
            inc_x, inc_obj = xr, obj

    # root rounding heuristic
    frac = _fractionality(root.x, int_idx)
    if frac.max(initial=0.0) > params.int_tol:
        rl, ru = lb0.copy(), ub0.copy()
        rounded = np.clip(np.round(root.x[int_idx]), lb0[int_idx], ub0[int_idx])
        rl[int_idx] = ru[int_idx] = rounded
        h = engine.solve(rl, ru, root.basis, deadline - time.perf_counter())
        if h.ok:
            consider(h.x, h.objective)

    def prune_limit() -> float:
        if not math.isfinite(inc_obj):
            return math.inf
        return inc_obj - max(1e-9, params.gap * max(1e-10, abs(inc_obj)))

    counter = 0
    # heap entries: (bound, -depth, node id, lb changes, ub changes, warm start)
    heap: list = [(root.objective, 0, 0, {}, {}, root.basis, root)]
    trace: list[NodeRecord] = []
    nodes = 0
    best_bound = root.objective
    status = None
    exhausted = True
    while heap:
        if params.node_limit is not None and nodes >= params.node_limit:
            status = "node-limit"
            break
        if time.perf_counter() > deadline:
            status = "time-limit"
            break
        key, negdepth, nid, lch, uch, start, pre = heapq.heappop(heap)
        best_bound = max(best_bound, min(key, inc_obj))
        if key >= prune_limit():
            # every remaining node is at least as bad
            heap.clear()
            best_bound = min(inc_obj, key)
            exhausted = False
            break
        nodes += 1
        if pre is not None:
            lp = pre
        else:
            lb, ub = lb0.copy(), ub0.copy()
            for j, v in lch.items():
                lb[j] = v
            for j, v in uch.items():
                ub[j] = v
            lp = engine.solve(lb, ub, start, deadline - time.perf_counter())
        if lp.status == "time-limit":
            heapq.heappush(heap, (key, negdepth, nid, lch, uch, start, None))
            status = "time-limit"
            break
        if lp.status == "numerical":
            status = "numerical"
            break
        if not lp.ok:
            trace.append(NodeRecord(nid, -negdepth, math.inf, inc_obj, best_bound))
            continue
        trace.append(NodeRecord(nid, -negdepth, lp.objective, inc_obj, best_bound))
        if params.log_every and nodes % params.log_every == 0:
            logger.info("node %d, depth %d, incumbent %.6g, bound %.6g, gap %.3g",
                        nodes, -negdepth, inc_obj, best_bound, relative_gap(inc_obj, best_bound))
        if lp.objective >= prune_limit():
            continue
        frac = _fractionality(lp.x, int_idx)
        k = int(np.argmax(frac))
        if frac[k] <= params.int_tol:
            consider(lp.x, lp.objective)
            continue
        j = int(int_idx[k])
        v = lp.x[j]
        depth = -negdepth + 1
        down_u = dict(uch)
        down_u[j] = math.floor(v)
        up_l = dict(lch)
        up_l[j] = math.ceil(v)
        counter += 1
        heapq.heappush(heap, (lp.objective, -depth, counter, lch, down_u, lp.basis, None))
        counter += 1
        heapq.heappush(heap, (lp.objective, -depth, counter, up_l, uch, lp.basis, None))

    if status is None:
        # tree exhausted or pruned by the gap criterion
        if inc_x is None:
            return finish("infeasible", None, math.inf, math.inf, nodes, trace)
        bound = inc_obj if exhausted else min(inc_obj, best_bound)
        return finish("optimal", inc_x, inc_obj, bound, nodes, trace)
    open_bound = min((h[0] for h in heap), default=inc_obj)
    bound = min(open_bound, inc_obj)
    if inc_x is None:
        return finish(status, None, math.nan, bound, nodes, trace)
    g = relative_gap(inc_obj, bound)
    return finish("optimal" if g <= params.gap else "feasible-with-gap", inc_x, inc_obj, bound, nodes, trace)


def _solve_with_highs(problem: MilpProblem, params: SolveParams) -> MilpOutcome:
    t0 = time.perf_counter()
    status, x, obj = solve_milp_highs(problem, params.gap, params.time_limit)
    if x is not None and status != "optimal":
        status = "time-limit"
    if x is None and status in ("iteration-limit", "time-limit"):
        status = "time-limit"
    # HiGHS does not report its bound through scipy; an optimal status means the gap was met
    bound = obj if status == "optimal" else -math.inf
    gap = 0.0 if status == "optimal" else math.inf
    return MilpOutcome(status, x, obj, bound, gap, 0, time.perf_counter() - t0, 0, [])
