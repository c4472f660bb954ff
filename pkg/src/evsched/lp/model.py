"""Box-bounded linear program representation.

All variables carry finite bounds, which is what scheduling programs produce
naturally (per-step energy limits, SOE windows) and what rules out unbounded
problems by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

LEQ = "<="
EQ = "="
GEQ = ">="
_RELATIONS = (LEQ, EQ, GEQ)


class LpError(ValueError):
    """Malformed linear program."""


class UnboundedProblemError(RuntimeError):
    """Objective unbounded below: an internal defect for box-bounded programs."""


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float

    @staticmethod
    def of(coeffs: Mapping[int, float], relation: str, rhs: float) -> "Constraint":
        return Constraint(tuple(sorted(coeffs.items())), relation, float(rhs))


@dataclass(frozen=True)
class LinearProgram:
    """Minimize ``objective @ x`` s.t. per-variable bounds and row constraints."""

    objective: tuple[float, ...]
    var_bounds: tuple[tuple[float, float], ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        n = len(self.objective)
        if len(self.var_bounds) != n:
            raise LpError("objective and var_bounds lengths differ")
        for j, (lo, hi) in enumerate(self.var_bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise LpError(f"variable {j}: bounds must be finite")
            if lo > hi:
                raise LpError(f"variable {j}: lower bound exceeds upper bound")
        for c in self.objective:
            if not math.isfinite(c):
                raise LpError("objective coefficients must be finite")
        for k, con in enumerate(self.constraints):
            if con.relation not in _RELATIONS:
                raise LpError(f"constraint {k}: unknown relation {con.relation!r}")
            if not math.isfinite(con.rhs):
                raise LpError(f"constraint {k}: rhs must be finite")
            for j, a in con.coeffs:
                if not 0 <= j < n:
                    raise LpError(f"constraint {k}: variable index {j} out of range")
                if not math.isfinite(a):
                    raise LpError(f"constraint {k}: coefficient must be finite")

    @property
    def num_vars(self) -> int:
        return len(self.objective)


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    values: np.ndarray | None
    objective_value: float | None

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpBuilder:
    """Incremental LP assembly used by the scheduling modules."""

    def __init__(self):
        self._cost: list[float] = []
        self._bounds: list[tuple[float, float]] = []
        self._constraints: list[Constraint] = []

    def add_var(self, lower: float, upper: float, cost: float = 0.0) -> int:
        self._cost.append(float(cost))
        self._bounds.append((float(lower), float(upper)))
        return len(self._cost) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float) -> None:
        self._constraints.append(Constraint.of(coeffs, relation, rhs))

    def build(self) -> LinearProgram:
        return LinearProgram(tuple(self._cost), tuple(self._bounds), tuple(self._constraints))


def constraint_matrix(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Dense (A, rhs, relations) view of the constraint rows."""
    m, n = len(lp.constraints), lp.num_vars
    A = np.zeros((m, n))
    rhs = np.zeros(m)
    relations: list[str] = []
    for i, con in enumerate(lp.constraints):
        for j, a in con.coeffs:
            A[i, j] += a
        rhs[i] = con.rhs
        relations.append(con.relation)
    return A, rhs, relations


def check_solution(lp: LinearProgram, x: Sequence[float], tol: float = 1e-9) -> list[str]:
    """Names of constraints/bounds violated beyond ``tol`` (empty when clean)."""
    x = np.asarray(x, dtype=float)
    bad: list[str] = []
    for j, (lo, hi) in enumerate(lp.var_bounds):
        if x[j] < lo - tol or x[j] > hi + tol:
            bad.append(f"bound[{j}]")
    A, rhs, rel = constraint_matrix(lp)
    if len(rhs):
        lhs = A @ x
        for i, r in enumerate(rel):
            err = lhs[i] - rhs[i]
            if (r == LEQ and err > tol) or (r == GEQ and err < -tol) or (r == EQ and abs(err) > tol):
                bad.append(f"constraint[{i}]")
    return bad
