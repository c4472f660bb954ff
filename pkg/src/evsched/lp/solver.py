"""Two-phase bounded-variable primal simplex on a dense tableau.

Constraints are turned into equalities with finite-bounded slack variables
(interval arithmetic over the box bounds supplies the slack ranges), Phase I
drives artificial variables to zero, Phase II optimizes the real objective.
Bland's rule makes every pivot decision, so the solver is deterministic and
cannot cycle. Problem sizes in this package stay in the hundreds of
variables, where a dense tableau is the simplest correct choice.

The iteration loop itself lives in a kernel selected at import time: the
compiled Cython extension when available, otherwise the numpy fallback.
Set ``EVSCHED_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernel_py
from .model import (
    EQ,
    GEQ,
    LEQ,
    LinearProgram,
    LpSolution,
    LpStatus,
    UnboundedProblemError,
    check_solution,
    constraint_matrix,
)

if os.environ.get("EVSCHED_PURE_PYTHON"):
    _kernel = _kernel_py
else:
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        _kernel = _kernel_py

DUAL_TOL = 1e-10
PIV_TOL = 1e-10
FEAS_TOL = 1e-9


class SolverStalledError(RuntimeError):
    """Iteration cap reached: indicates a numerical defect, not a model state."""


def backend_name() -> str:
    """Which iteration kernel is active ("cython" or "python")."""
    return _kernel.BACKEND_NAME


def available_kernels():
    """The importable kernels, compiled first."""
    kernels = []
    if _kernel is not _kernel_py:
        kernels.append(_kernel)
    kernels.append(_kernel_py)
    return kernels


def solve(lp: LinearProgram, kernel=None) -> LpSolution:
    """Minimize the program; Optimal within 1e-6 relative or Infeasible.

    Deterministic for a fixed kernel: identical inputs give identical output.
    """
    kernel = kernel or _kernel
    n = lp.num_vars
    lo_s = np.array([b[0] for b in lp.var_bounds], dtype=float)
    up_s = np.array([b[1] for b in lp.var_bounds], dtype=float)
    cost_s = np.asarray(lp.objective, dtype=float)

    if not lp.constraints:
        x = np.where(cost_s > 0, lo_s, up_s)
        return LpSolution(LpStatus.OPTIMAL, x, float(cost_s @ x))

    A, rhs, relations = constraint_matrix(lp)
    m = len(rhs)

    # Slack columns with finite interval-derived bounds.
    slack_rows = [i for i, r in enumerate(relations) if r != EQ]
    n_slack = len(slack_rows)
    N = n + n_slack
    A_full = np.zeros((m, N + m))
    A_full[:, :n] = A
    lower = np.concatenate([lo_s, np.zeros(n_slack + m)])
    upper = np.empty(N + m)
    upper[:n] = up_s
    row_min = np.minimum(A * lo_s, A * up_s).sum(axis=1)
    row_max = np.maximum(A * lo_s, A * up_s).sum(axis=1)
    for k, i in enumerate(slack_rows):
        j = n + k
        if relations[i] == LEQ:
            A_full[i, j] = 1.0
            upper[j] = max(0.0, rhs[i] - row_min[i])
        else:  # GEQ
            A_full[i, j] = -1.0
            upper[j] = max(0.0, row_max[i] - rhs[i])

    # Phase I: artificial basis absorbing the residual at the all-lower point.
    x0 = lower[:N]
    resid = rhs - A_full[:, :N] @ x0
    art_ub = np.abs(resid).sum() + 1.0
    for i in range(m):
        A_full[i, N + i] = 1.0 if resid[i] >= 0 else -1.0
        upper[N + i] = art_ub

    signs = np.where(resid >= 0, 1.0, -1.0)
    T = signs[:, None] * A_full
    xB = np.abs(resid)
    basis = np.arange(N, N + m, dtype=np.int64)
    vstat = np.zeros(N + m, dtype=np.int8)
    vstat[basis] = 2
    allow = np.ones(N + m, dtype=np.uint8)

    cost1 = np.zeros(N + m)
    cost1[N:] = 1.0
    max_iter = 1000 + 200 * (N + 2 * m)

    code = kernel.run_simplex(T, xB, basis, vstat, lower, upper, cost1, allow, max_iter, DUAL_TOL, PIV_TOL)
    if code != 0:
        raise SolverStalledError("phase I iteration cap reached")
    x = _current_point(lower, upper, vstat, basis, xB)
    if float(x[N:].sum()) > FEAS_TOL * (1.0 + float(np.abs(rhs).max(initial=0.0))):
        return LpSolution(LpStatus.INFEASIBLE, None, None)

    _expel_artificials(T, xB, basis, vstat, lower, upper, N)
    allow[N:] = 0

    cost2 = np.zeros(N + m)
    cost2[:n] = cost_s
    code = kernel.run_simplex(T, xB, basis, vstat, lower, upper, cost2, allow, max_iter, DUAL_TOL, PIV_TOL)
    if code != 0:
        raise SolverStalledError("phase II iteration cap reached")

    x = _current_point(lower, upper, vstat, basis, xB)
    for _ in range(2):
        if not check_solution(lp, x[:n], tol=5e-10):
            break
        # accumulated tableau drift: refactorize from the current basis
        _refactorize(A_full, rhs, lower, upper, basis, vstat, T, xB)
        kernel.run_simplex(T, xB, basis, vstat, lower, upper, cost2, allow, max_iter, DUAL_TOL, PIV_TOL)
        x = _current_point(lower, upper, vstat, basis, xB)

    xs = np.clip(x[:n], lo_s, up_s)
    bad = check_solution(lp, xs, tol=1e-7)
    if bad:
        raise SolverStalledError(f"solution verification failed: {bad[:3]}")
    return LpSolution(LpStatus.OPTIMAL, xs, float(cost_s @ xs))


def _current_point(lower, upper, vstat, basis, xB) -> np.ndarray:
    x = np.where(vstat == 1, upper, lower)
    x[basis] = xB
    return x


def _expel_artificials(T, xB, basis, vstat, lower, upper, N) -> None:
    """Degenerate pivots replacing basic artificials by structural columns.

    Rows whose non-artificial entries are all ~0 are redundant constraints;
    their artificial stays basic at value 0 and never moves again.
    """
    m = T.shape[0]
    for i in range(m):
        if basis[i] < N:
            continue
        row = T[i, :N]
        candidates = np.nonzero((np.abs(row) > 1e-7) & (vstat[:N] != 2))[0]
        if candidates.size == 0:
            continue
        j = int(candidates[0])
        x_enter = upper[j] if vstat[j] == 1 else lower[j]
        piv = T[i, j]
        T[i, :] /= piv
        colj = T[:, j].copy()
        colj[i] = 0.0
        T -= np.outer(colj, T[i, :])
        vstat[basis[i]] = 0
        basis[i] = j
        vstat[j] = 2
        xB[i] = x_enter


def _refactorize(A_full, rhs, lower, upper, basis, vstat, T, xB) -> None:
    x_n = np.where(vstat == 1, upper, lower)
    nonbasic = np.ones(A_full.shape[1], dtype=bool)
    nonbasic[basis] = False
    B = A_full[:, basis]
    T[:, :] = np.linalg.solve(B, A_full)
    xB[:] = np.linalg.solve(B, rhs - A_full[:, nonbasic] @ x_n[nonbasic])


__all__ = [
    "solve",
    "backend_name",
    "available_kernels",
    "SolverStalledError",
    "UnboundedProblemError",
]
