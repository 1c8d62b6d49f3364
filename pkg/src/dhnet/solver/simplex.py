"""Bounded-variable revised simplex.

Every row ``lo_i <= a_i x <= hi_i`` gets a logical variable ``s_i`` so the
working system is ``A x - s = 0`` with box bounds on all columns. The
all-logical basis is the cold start; phase 1 minimises the sum of bound
infeasibilities of the basic variables, so any basis can serve as a start.
A dual simplex loop re-optimises after bound changes (branch and bound).

The basis inverse is held as an LU factorisation (dense for small bases,
SuperLU otherwise) plus a product-form eta file that is refactorised every
``refactor_every`` pivots.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import MilpProblem

logger = logging.getLogger(__name__)

BASIC, AT_LOWER, AT_UPPER, FREE, FIXED = 0, 1, 2, 3, 4

DENSE_LIMIT = 250


class NumericalError(RuntimeError):
    pass


@dataclass
class LpOutcome:
    status: str  # optimal | infeasible | unbounded | iteration-limit | time-limit | numerical
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    basis: "WarmStart | None" = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass
class WarmStart:
    basis: np.ndarray
    status: np.ndarray

    def copy(self) -> "WarmStart":
        return WarmStart(self.basis.copy(), self.status.copy())


@dataclass
class SimplexOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    max_iter: int | None = None
    time_limit: float = float("inf")
    refactor_every: int = 64
    degenerate_streak: int = 50
    extra: dict = field(default_factory=dict)


class _Factor:
    """LU of the basis matrix plus eta file."""

    def __init__(self, B: sp.csc_matrix):
        m = B.shape[0]
        self.m = m
        self.etas: list[tuple[int, np.ndarray]] = []
        if m == 0:
            self._dense = None
            self._lu = None
            return
        if m <= DENSE_LIMIT:
            Bd = B.toarray()
            lu, piv = la.lu_factor(Bd, check_finite=False)
            diag = np.abs(np.diag(lu))
            if diag.min() <= 1e-11 * max(1.0, diag.max()):
                raise NumericalError("singular basis")
            self._dense = (lu, piv)
            self._lu = None
        else:
            self._dense = None
            try:
                self._lu = spla.splu(B.tocsc(), permc_spec="COLAMD", options={"SymmetricMode": False})
            except RuntimeError as exc:  # exactly singular
                raise NumericalError(str(exc)) from exc
            udiag = np.abs(self._lu.U.diagonal())
            if udiag.min() <= 1e-11 * max(1.0, udiag.max()):
                raise NumericalError("singular basis")

    def _solve(self, b: np.ndarray, trans: bool) -> np.ndarray:
        if self._dense is not None:
            return la.lu_solve(self._dense, b, trans=1 if trans else 0, check_finite=False)
        return self._lu.solve(b, trans="T" if trans else "N")

    def ftran(self, b: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return b.copy()
        x = self._solve(b, False)
        for r, d in self.etas:
            xr = x[r] / d[r]
            if xr != 0.0:
                x -= xr * d
            x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return c.copy()
        w = c.astype(float, copy=True)
        for r, d in reversed(self.etas):
            # column r of the eta matrix is (-d_i/d_r, ..., 1/d_r at r, ...)
            wr = w[r]
            w[r] = (wr - (d @ w - d[r] * wr)) / d[r]
        return self._solve(w, True)

    def update(self, r: int, d: np.ndarray) -> None:
        self.etas.append((r, d.copy()))


class BoundedSimplex:
    """Reusable LP solver state over ``min c x, lo <= A x <= hi, l <= x <= u``."""

    def __init__(
        self,
        A: sp.spmatrix,
        c: np.ndarray,
        row_lo: np.ndarray,
        row_hi: np.ndarray,
        lb: np.ndarray,
        ub: np.ndarray,
        options: SimplexOptions | None = None,
    ):
        self.opt = options or SimplexOptions()
        A = sp.csr_matrix(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        N = n + m
        self.A = sp.hstack([A, -sp.identity(m, format="csr")], format="csc")
        self.At = self.A.T.tocsr()
        self.c = np.concatenate([np.asarray(c, float), np.zeros(m)])
        self.lo = np.concatenate([np.asarray(lb, float), np.asarray(row_lo, float)])
        self.hi = np.concatenate([np.asarray(ub, float), np.asarray(row_hi, float)])
        self.x = np.zeros(N)
        self.basis = np.arange(n, n + m)
        self.status = np.full(N, AT_LOWER, dtype=np.int8)
        self.status[self.basis] = BASIC
        self.iterations = 0
        self._factor: _Factor | None = None
        self._deadline = float("inf")
        self._max_iter = 0

    # -- setup ------------------------------------------------------------
    @classmethod
    def from_problem(cls, problem: MilpProblem, options: SimplexOptions | None = None) -> "BoundedSimplex":
        lo, hi = problem.row_bounds()
        return cls(problem.matrix(), problem.objective, lo, hi, problem.lb, problem.ub, options)

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        self.lo[: self.n] = lb
        self.hi[: self.n] = ub

    def warm_start(self) -> WarmStart:
        return WarmStart(self.basis.copy(), self.status.copy())

    def load(self, start: WarmStart | None) -> None:
        if start is None:
            self.basis = np.arange(self.n, self.n + self.m)
            self.status = np.full(self.n + self.m, AT_LOWER, dtype=np.int8)
            self.status[self.basis] = BASIC
        else:
            self.basis = start.basis.copy()
            self.status = start.status.copy()
        self._place_nonbasic()
        self._refactor()

    def _place_nonbasic(self) -> None:
        lo, hi, st = self.lo, self.hi, self.status
        nb = st != BASIC
        fin_lo = np.isfinite(lo)
        fin_hi = np.isfinite(hi)
        fixed = nb & (lo == hi)
        keep_up = nb & ~fixed & (st == AT_UPPER) & fin_hi
        rest = nb & ~fixed & ~keep_up
        to_lo = rest & fin_lo
        to_up = rest & ~fin_lo & fin_hi
        free = rest & ~fin_lo & ~fin_hi
        st[fixed] = FIXED
        st[to_lo] = AT_LOWER
        st[to_up | keep_up] = AT_UPPER
        st[free] = FREE
        self.x[fixed | to_lo] = lo[fixed | to_lo]
        self.x[to_up | keep_up] = hi[to_up | keep_up]
        self.x[free] = 0.0

    def _refactor(self) -> None:
        B = self.A[:, self.basis]
        self._factor = _Factor(B)
        self._compute_xb()

    def _compute_xb(self) -> None:
        xn = self.x.copy()
        xn[self.basis] = 0.0
        rhs = -(self.A @ xn)
        self.x[self.basis] = self._factor.ftran(rhs)

    def _pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int) -> None:
        p = self.basis[r]
        self.basis[r] = q
        self.status[q] = BASIC
        self.status[p] = leave_status
        if leave_status == AT_LOWER:
            self.x[p] = self.lo[p]
        elif leave_status == AT_UPPER:
            self.x[p] = self.hi[p]
        if self.lo[p] == self.hi[p]:
            self.status[p] = FIXED
            self.x[p] = self.lo[p]
        self._factor.update(r, alpha)
        if len(self._factor.etas) >= self.opt.refactor_every:
            self._refactor()

    def _column(self, q: int) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self.A.indptr[q], self.A.indptr[q + 1]
        col[self.A.indices[s:e]] = self.A.data[s:e]
        return col

    def _reduced_costs(self, cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = self._factor.btran(cost[self.basis])
        d = cost - self.At @ y
        d[self.basis] = 0.0
        return y, d

    def _check_limits(self) -> str | None:
        if self.iterations >= self._max_iter:
            return "iteration-limit"
        if time.perf_counter() > self._deadline:
            return "time-limit"
        return None

    # -- primal simplex -----------------------------------------------------
    def _infeasibility(self) -> tuple[np.ndarray, np.ndarray]:
        xb = self.x[self.basis]
        tol = self.opt.feas_tol
        below = xb < self.lo[self.basis] - tol
        above = xb > self.hi[self.basis] + tol
        return below, above

    def primal(self) -> str:
        """Run phase 1 / phase 2 from the current basis."""
        opt = self.opt
        tol = opt.feas_tol
        dtol = opt.opt_tol
        streak = 0
        bland = False
        phase_cost = np.zeros(self.n + self.m)
        while True:
            lim = self._check_limits()
            if lim:
                return lim
            below, above = self._infeasibility()
            phase1 = bool(below.any() or above.any())
            if phase1:
                phase_cost[:] = 0.0
                phase_cost[self.basis[below]] = -1.0
                phase_cost[self.basis[above]] = 1.0
                cost = phase_cost
            else:
                cost = self.c
            _, d = self._reduced_costs(cost)
            st = self.status
            can_inc = (st == AT_LOWER) | (st == FREE)
            can_dec = (st == AT_UPPER) | (st == FREE)
            inc = can_inc & (d < -dtol)
            dec = can_dec & (d > dtol)
            elig = inc | dec
            if not elig.any():
                if phase1:
                    return "infeasible"
                return "optimal"
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d), 0.0)
                q = int(np.argmax(score))
            direction = 1.0 if inc[q] else -1.0
            alpha = self._factor.ftran(self._column(q))
            # basic values move by delta * theta
            delta = -direction * alpha
            r, theta, leave_status = self._primal_ratio(delta, phase1, bland)
            rng = self.hi[q] - self.lo[q]
            if np.isfinite(rng) and rng <= theta:
                # bound flip of the entering variable
                theta = rng
                self.x[q] += direction * theta
                self.x[self.basis] += delta * theta
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.iterations += 1
                streak = 0
                bland = False
                continue
            if r < 0:
                if phase1:
                    # cannot happen for an improving phase-1 direction
                    raise NumericalError("phase 1 ray without breakpoint")
                return "unbounded"
            if abs(alpha[r]) < opt.pivot_tol:
                self._refactor()
                raise NumericalError("tiny pivot")
            self.x[q] += direction * theta
            self.x[self.basis] += delta * theta
            self._pivot(r, q, alpha, leave_status)
            self.iterations += 1
            if theta <= tol:
                streak += 1
                if streak >= opt.degenerate_streak:
                    bland = True
            else:
                streak = 0
                bland = False

    def _primal_ratio(self, delta: np.ndarray, phase1: bool, bland: bool) -> tuple[int, float, int]:
        tol = self.opt.feas_tol
        ptol = self.opt.pivot_tol
        B = self.basis
        xb = self.x[B]
        lo = self.lo[B]
        hi = self.hi[B]
        up = delta > ptol
        down = delta < -ptol
        below = xb < lo - tol
        above = xb > hi + tol
        # target bound for each moving basic variable
        target = np.full(self.m, np.nan)
        leave = np.zeros(self.m, dtype=np.int8)
        t_up_lo = up & below  # becomes feasible at lo
        t_up_hi = up & ~below & ~above & np.isfinite(hi)
        t_dn_hi = down & above
        t_dn_lo = down & ~below & ~above & np.isfinite(lo)
        target[t_up_lo] = lo[t_up_lo]
        leave[t_up_lo] = AT_LOWER
        target[t_up_hi] = hi[t_up_hi]
        leave[t_up_hi] = AT_UPPER
        target[t_dn_hi] = hi[t_dn_hi]
        leave[t_dn_hi] = AT_UPPER
        target[t_dn_lo] = lo[t_dn_lo]
        leave[t_dn_lo] = AT_LOWER
        cand = ~np.isnan(target)
        if not cand.any():
            return -1, np.inf, 0
        idx = np.flatnonzero(cand)
        dl = delta[idx]
        gap = target[idx] - xb[idx]
        ratio = np.maximum(gap / dl, 0.0)
        if bland:
            ties = np.flatnonzero(ratio <= ratio.min() + 1e-12)
            j = ties[np.argmin(B[idx[ties]])]
            return int(idx[j]), float(ratio[j]), int(leave[idx[j]])
        # Harris two-pass: relaxed step, then largest pivot among admissible rows
        relaxed = (gap + np.sign(dl) * tol) / dl
        theta_max = relaxed.min()
        ok = ratio <= theta_max
        pick = np.flatnonzero(ok)
        j = pick[np.argmax(np.abs(dl[pick]))]
        r = int(idx[j])
        return r, float(ratio[j]), int(leave[r])

    # -- dual simplex -------------------------------------------------------
    def dual_feasible(self) -> bool:
        _, d = self._reduced_costs(self.c)
        return self._repair_dual(d, dry=True)

    def _repair_dual(self, d: np.ndarray, dry: bool = False) -> bool:
        tol = self.opt.opt_tol * 10
        st = self.status
        bad_lo = (st == AT_LOWER) & (d < -tol)
        bad_up = (st == AT_UPPER) & (d > tol)
        bad_free = (st == FREE) & (np.abs(d) > tol)
        if bad_free.any():
            return False
        flip_lo = bad_lo & np.isfinite(self.hi)
        flip_up = bad_up & np.isfinite(self.lo)
        if (bad_lo & ~flip_lo).any() or (bad_up & ~flip_up).any():
            return False
        if dry:
            return True
        if flip_lo.any() or flip_up.any():
            st[flip_lo] = AT_UPPER
            self.x[flip_lo] = self.hi[flip_lo]
            st[flip_up] = AT_LOWER
            self.x[flip_up] = self.lo[flip_up]
            self._compute_xb()
        return True

    def dual(self) -> str:
        """Dual simplex from a dual-feasible basis. Returns a status string;
        ``"not-dual-feasible"`` means the caller should use :meth:`primal`."""
        opt = self.opt
        tol = opt.feas_tol
        _, d = self._reduced_costs(self.c)
        if not self._repair_dual(d):
            return "not-dual-feasible"
        while True:
            lim = self._check_limits()
            if lim:
                return lim
            B = self.basis
            xb = self.x[B]
            viol_lo = self.lo[B] - xb
            viol_hi = xb - self.hi[B]
            viol = np.maximum(viol_lo, viol_hi)
            r = int(np.argmax(viol))
            if viol[r] <= tol:
                return "optimal"
            to_lower = viol_lo[r] > viol_hi[r]
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self._factor.btran(e)
            arow = self.At @ rho
            y = self._factor.btran(self.c[B])
            d = self.c - self.At @ y
            st = self.status
            ptol = opt.pivot_tol
            if to_lower:
                elig = ((st == AT_LOWER) & (arow < -ptol)) | ((st == AT_UPPER) & (arow > ptol))
            else:
                elig = ((st == AT_LOWER) & (arow > ptol)) | ((st == AT_UPPER) & (arow < -ptol))
            elig |= (st == FREE) & (np.abs(arow) > ptol)
            if not elig.any():
                return "infeasible"
            idx = np.flatnonzero(elig)
            a = arow[idx]
            dd = np.abs(d[idx])
            ratio = dd / np.abs(a)
            relaxed = (dd + opt.opt_tol) / np.abs(a)
            bound = relaxed.min()
            pick = idx[ratio <= bound]
            q = int(pick[np.argmax(np.abs(arow[pick]))])
            bnd = self.lo[B[r]] if to_lower else self.hi[B[r]]
            alpha = self._factor.ftran(self._column(q))
            if abs(alpha[r]) < ptol:
                self._refactor()
                continue
            step = (xb[r] - bnd) / alpha[r]
            self.x[q] += step
            self.x[B] -= step * alpha
            self._pivot(r, q, alpha, AT_LOWER if to_lower else AT_UPPER)
            self.iterations += 1

    # -- drivers ------------------------------------------------------------
    def solve(self, start: WarmStart | None = None, use_dual: bool = False) -> LpOutcome:
        self.iterations = 0
        self._deadline = time.perf_counter() + self.opt.time_limit
        self._max_iter = self.opt.max_iter or max(10000, 50 * (self.n + self.m))
        try:
            if np.any(self.lo > self.hi + self.opt.feas_tol):
                return LpOutcome("infeasible", None, np.inf, iterations=0)
            self.load(start)
            status = None
            if use_dual and start is not None:
                status = self.dual()
                if status == "not-dual-feasible":
                    status = None
                elif status == "optimal":
                    status = self.primal()  # cleans up residual dual infeasibility
            if status is None:
                status = self.primal()
        except NumericalError as exc:
            logger.debug("simplex breakdown: %s; retrying from slack basis", exc)
            try:
                self.load(None)
                status = self.primal()
            except NumericalError as exc2:
                logger.warning("simplex numerical breakdown: %s", exc2)
                return LpOutcome("numerical", None, np.nan, iterations=self.iterations)
        if status == "optimal":
            # final refactor keeps reported values tight
            self._refactor()
            below, above = self._infeasibility()
            if below.any() or above.any():
                status = self.primal()
                if status != "optimal":
                    return LpOutcome(status, None, np.nan, iterations=self.iterations)
            y, d = self._reduced_costs(self.c)
            xs = self.x[: self.n].copy()
            xs = np.clip(xs, self.lo[: self.n], self.hi[: self.n])
            obj = float(self.c[: self.n] @ xs)
            return LpOutcome(
                "optimal", xs, obj, duals=y, reduced_costs=d[: self.n],
                iterations=self.iterations, basis=self.warm_start(),
            )
        if status == "infeasible":
            return LpOutcome("infeasible", None, np.inf, iterations=self.iterations)
        if status == "unbounded":
            return LpOutcome("unbounded", None, -np.inf, iterations=self.iterations)
        return LpOutcome(status, None, np.nan, iterations=self.iterations)


def solve_lp(problem: MilpProblem, options: SimplexOptions | None = None) -> LpOutcome:
    """Solve the LP relaxation of ``problem`` (integrality ignored)."""
    solver = BoundedSimplex.from_problem(problem, options)
    out = solver.solve()
    if out.ok:
        out.objective += problem.obj_constant
    return out
