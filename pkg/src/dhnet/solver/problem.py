"""Container for linear and mixed-integer linear programs.

Problems are always minimisation problems over bounded variables with
single-sided or equality rows. Rows keep a provenance tag naming the
constraint family that produced them, which the model builder uses to
label its rows and tests use to select them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf

SENSES = ("<=", ">=", "==")


@dataclass(frozen=True)
class Constraint:
    """Read-only view of one row."""

    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float
    tag: str


class MilpProblem:
    """A minimisation MILP built row by row.

    Variables carry bounds, an objective coefficient and an integrality
    flag. Rows are ``sum(coeffs) <sense> rhs``.
    """

    def __init__(self, name: str = "problem"):
        self.name = name
        self.var_names: list[str] = []
        self._var_index: dict[str, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._integer: list[bool] = []
        self.row_names: list[str] = []
        self._row_index: dict[str, int] = {}
        self.row_sense: list[str] = []
        self.row_rhs: list[float] = []
        self.row_tags: list[str] = []
        self._row_coeffs: list[dict[int, float]] = []
        self.obj_constant = 0.0

    # -- variables -----------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = INF,
        cost: float = 0.0,
        binary: bool = False,
        integer: bool = False,
    ) -> int:
        if name in self._var_index:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        j = len(self.var_names)
        self.var_names.append(name)
        self._var_index[name] = j
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(cost))
        self._integer.append(bool(binary or integer))
        return j

    def var(self, name: str) -> int:
        return self._var_index[name]

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    def set_bounds(self, j: int, lb: float | None = None, ub: float | None = None) -> None:
        if lb is not None:
            self._lb[j] = float(lb)
        if ub is not None:
            self._ub[j] = float(ub)

    def bounds(self, j: int) -> tuple[float, float]:
        return self._lb[j], self._ub[j]

    def fix(self, j: int, value: float) -> None:
        self._lb[j] = self._ub[j] = float(value)

    def set_cost(self, j: int, cost: float) -> None:
        self._obj[j] = float(cost)

    def add_cost(self, j: int, cost: float) -> None:
        self._obj[j] += float(cost)

    @property
    def lb(self) -> np.ndarray:
        return np.array(self._lb, dtype=float)

    @property
    def ub(self) -> np.ndarray:
        return np.array(self._ub, dtype=float)

    @property
    def objective(self) -> np.ndarray:
        return np.array(self._obj, dtype=float)

    @property
    def integrality(self) -> np.ndarray:
        return np.array(self._integer, dtype=bool)

    def is_integer(self, j: int) -> bool:
        return self._integer[j]

    def is_binary(self, j: int) -> bool:
        return self._integer[j] and self._lb[j] >= 0.0 and self._ub[j] <= 1.0

    # -- rows ----------------------------------------------------------
    def add_constraint(
        self,
        coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
        sense: str,
        rhs: float,
        name: str | None = None,
        tag: str = "row",
    ) -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict[int, float] = {}
        n = self.num_vars
        for j, v in items:
            if not 0 <= j < n:
                raise IndexError(f"variable index {j} out of range")
            row[j] = row.get(j, 0.0) + float(v)
        row = {j: v for j, v in row.items() if v != 0.0}
        i = len(self.row_names)
        if name is None:
            name = f"r{i}"
        if name in self._row_index:
            raise ValueError(f"duplicate row name {name!r}")
        if not tag:
            raise ValueError("rows need a provenance tag")
        self.row_names.append(name)
        self._row_index[name] = i
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs))
        self.row_tags.append(tag)
        self._row_coeffs.append(row)
        return i

    def row(self, i: int) -> Constraint:
        return Constraint(
            self.row_names[i], dict(self._row_coeffs[i]), self.row_sense[i], self.row_rhs[i], self.row_tags[i]
        )

    def row_index(self, name: str) -> int:
        return self._row_index[name]

    def rows(self, tag: str | None = None) -> Iterator[Constraint]:
        for i in range(self.num_rows):
            if tag is None or self.row_tags[i] == tag:
                yield self.row(i)

    def count_rows(self, tag: str) -> int:
        return sum(1 for t in self.row_tags if t == tag)

    # -- dense/sparse views ----------------------------------------------
    def matrix(self) -> sp.csr_matrix:
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for row in self._row_coeffs:
            indices.extend(row.keys())
            data.extend(row.values())
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(self.num_rows, self.num_vars),
        )

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.array(self.row_rhs, dtype=float)
        sense = np.array(self.row_sense, dtype=object)
        lo = np.where(sense == "<=", -INF, rhs)
        hi = np.where(sense == ">=", INF, rhs)
        return lo.astype(float), hi.astype(float)

    def copy(self) -> "MilpProblem":
        other = MilpProblem(self.name)
        other.var_names = list(self.var_names)
        other._var_index = dict(self._var_index)
        other._lb = list(self._lb)
        other._ub = list(self._ub)
        other._obj = list(self._obj)
        other._integer = list(self._integer)
        other.row_names = list(self.row_names)
        other._row_index = dict(self._row_index)
        other.row_sense = list(self.row_sense)
        other.row_rhs = list(self.row_rhs)
        other.row_tags = list(self.row_tags)
        other._row_coeffs = [dict(r) for r in self._row_coeffs]
        other.obj_constant = self.obj_constant
        return other

    def relaxed(self) -> "MilpProblem":
        """Copy with integrality dropped (binaries keep their [0, 1] box)."""
        other = self.copy()
        other._integer = [False] * self.num_vars
        return other

    # -- evaluation ------------------------------------------------------
    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ np.asarray(x, dtype=float)) + self.obj_constant

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self.num_vars:
            viol = max(float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        if self.num_rows:
            ax = self.matrix() @ x
            lo, hi = self.row_bounds()
            viol = max(viol, float(np.max(lo - ax, initial=0.0)), float(np.max(ax - hi, initial=0.0)))
        return viol

    def __repr__(self) -> str:
        n_int = sum(self._integer)
        return f"MilpProblem({self.name!r}, vars={self.num_vars}, int={n_int}, rows={self.num_rows})"
