"""Bounded-variable LP representation, simplex solver and brute-force oracle."""

from .model import (
    EQ,
    GEQ,
    LEQ,
    Constraint,
    LinearProgram,
    LpBuilder,
    LpError,
    LpSolution,
    LpStatus,
    UnboundedProblemError,
    check_solution,
)
from .oracle import MAX_GRID_POINTS, MAX_VARS, OracleSizeError, brute_force_oracle
from .solver import SolverStalledError, available_kernels, backend_name, solve

__all__ = [
    "Constraint",
    "LinearProgram",
    "LpBuilder",
    "LpError",
    "LpSolution",
    "LpStatus",
    "LEQ",
    "EQ",
    "GEQ",
    "MAX_GRID_POINTS",
    "MAX_VARS",
    "OracleSizeError",
    "SolverStalledError",
    "UnboundedProblemError",
    "available_kernels",
    "backend_name",
    "brute_force_oracle",
    "check_solution",
    "solve",
]
