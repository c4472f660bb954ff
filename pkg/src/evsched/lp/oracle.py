"""Exhaustive grid-search oracle used to certify the simplex solver.

Enumerates the Cartesian product of evenly spaced points over every
variable's bound interval and returns the best feasible grid point. This is
a lower-fidelity bound: it matches the true optimum only when the grid
happens to contain an optimal vertex, which the tests arrange explicitly.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import EQ, GEQ, LEQ, LinearProgram, LpSolution, LpStatus, constraint_matrix

MAX_VARS = 8
MAX_GRID_POINTS = 21
_MAX_COMBINATIONS = 20_000_000
_CHUNK = 65536


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


def brute_force_oracle(lp: LinearProgram, grid_points: int, feas_tol: float = 1e-9) -> LpSolution:
    """Best feasible point on the bound-interval grid, or Infeasible."""
    n = lp.num_vars
    if n > MAX_VARS:
        raise OracleSizeError(f"instance too large: {n} variables exceeds {MAX_VARS}")
    if grid_points > MAX_GRID_POINTS:
        raise OracleSizeError(f"instance too large: {grid_points} grid points exceeds {MAX_GRID_POINTS}")
    if grid_points < 1:
        raise OracleSizeError("grid_points must be >= 1")
    if grid_points ** n > _MAX_COMBINATIONS:
        raise OracleSizeError(f"instance too large: {grid_points}**{n} grid combinations")

    axes = []
    for lo, hi in lp.var_bounds:
        if grid_points == 1:
            axes.append(np.array([lo]))
        else:
            axes.append(np.linspace(lo, hi, grid_points))
    c = np.asarray(lp.objective)
    A, rhs, relations = constraint_matrix(lp)
    leq = np.array([r == LEQ for r in relations])
    geq = np.array([r == GEQ for r in relations])
    eq = np.array([r == EQ for r in relations])

    best_val = np.inf
    best_x: np.ndarray | None = None
    points = itertools.product(*axes)
    while True:
        chunk = np.array(list(itertools.islice(points, _CHUNK)))
        if chunk.size == 0:
            break
        if len(rhs):
            lhs = chunk @ A.T
            ok = np.ones(len(chunk), dtype=bool)
            if leq.any():
                ok &= (lhs[:, leq] <= rhs[leq] + feas_tol).all(axis=1)
            if geq.any():
                ok &= (lhs[:, geq] >= rhs[geq] - feas_tol).all(axis=1)
            if eq.any():
                ok &= (np.abs(lhs[:, eq] - rhs[eq]) <= feas_tol).all(axis=1)
            chunk = chunk[ok]
            if chunk.size == 0:
                continue
        vals = chunk @ c
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_x = chunk[k].copy()

    if best_x is None:
        return LpSolution(LpStatus.INFEASIBLE, None, None)
    return LpSolution(LpStatus.OPTIMAL, best_x, best_val)
