"""Pure-numpy bounded-variable simplex iteration loop.

Fallback implementation of the same contract as the compiled kernel in
``_kernel.pyx``: Bland's rule (lowest eligible index enters, lowest variable
index leaves among ties) on a dense tableau, with bound flips for nonbasic
variables that hit their opposite bound first.

Variable status codes: 0 = nonbasic at lower bound, 1 = nonbasic at upper
bound, 2 = basic. Returns 0 on optimality, 1 when the iteration cap is hit.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_TIE_TOL = 1e-12


def run_simplex(
    T: np.ndarray,
    xB: np.ndarray,
    basis: np.ndarray,
    vstat: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    cost: np.ndarray,
    allow: np.ndarray,
    max_iter: int,
    dual_tol: float,
    piv_tol: float,
) -> int:
    m = T.shape[0]
    for _ in range(max_iter):
        d = cost - T.T @ cost[basis]
        eligible = allow & (upper > lower) & (
            ((vstat == 0) & (d < -dual_tol)) | ((vstat == 1) & (d > dual_tol))
        )
        js = np.nonzero(eligible)[0]
        if js.size == 0:
            return 0
        j = int(js[0])
        sigma = 1.0 if vstat[j] == 0 else -1.0
        col = T[:, j]
        a = sigma * col

        ratios = np.full(m, np.inf)
        pos = a > piv_tol
        neg = a < -piv_tol
        if pos.any():
            ratios[pos] = (xB[pos] - lower[basis[pos]]) / a[pos]
        if neg.any():
            ratios[neg] = (xB[neg] - upper[basis[neg]]) / a[neg]
        np.maximum(ratios, 0.0, out=ratios)
        rmin = ratios.min() if m else np.inf
        span = upper[j] - lower[j]

        if span < rmin - _TIE_TOL:
            # entering variable reaches its opposite bound before any basic
            # variable blocks: flip without changing the basis
            xB -= sigma * span * col
            vstat[j] = 1 - vstat[j]
            continue

        tied = np.nonzero(ratios <= rmin + _TIE_TOL)[0]
        r = int(tied[np.argmin(basis[tied])])
        delta = float(ratios[r])

        xB -= sigma * delta * col
        leaving = int(basis[r])
        vstat[leaving] = 0 if a[r] > 0 else 1
        x_enter = lower[j] + delta if sigma > 0 else upper[j] - delta

        piv = T[r, j]
        T[r, :] /= piv
        colj = T[:, j].copy()
        colj[r] = 0.0
        T -= np.outer(colj, T[r, :])
        xB[r] = x_enter
        basis[r] = j
        vstat[j] = 2
    return 1
