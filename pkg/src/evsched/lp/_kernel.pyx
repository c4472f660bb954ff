# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled bounded-variable simplex iteration loop.

Same contract and pivoting rules as ``_kernel_py.run_simplex``; typed loops
replace the vectorized tableau updates. Selected at import by
``evsched.lp.solver`` when the extension built successfully.
"""

import numpy as np
cimport numpy as cnp

BACKEND_NAME = "cython"

cdef double TIE_TOL = 1e-12


def run_simplex(
    cnp.float64_t[:, ::1] T,
    cnp.float64_t[::1] xB,
    cnp.int64_t[::1] basis,
    cnp.int8_t[::1] vstat,
    cnp.float64_t[::1] lower,
    cnp.float64_t[::1] upper,
    cnp.float64_t[::1] cost,
    cnp.uint8_t[::1] allow,
    int max_iter,
    double dual_tol,
    double piv_tol,
):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef Py_ssize_t it, i, j, jj, r, leaving
    cdef double d, sigma, a, ratio, rmin, span, delta, piv, factor, x_enter

    for it in range(max_iter):
        # Bland entering rule: lowest index with an improving reduced cost.
        j = -1
        sigma = 0.0
        for jj in range(n):
            if not allow[jj] or vstat[jj] == 2 or upper[jj] <= lower[jj]:
                continue
            d = cost[jj]
            for i in range(m):
                d -= cost[basis[i]] * T[i, jj]
            if vstat[jj] == 0 and d < -dual_tol:
                j = jj
                sigma = 1.0
                break
            if vstat[jj] == 1 and d > dual_tol:
                j = jj
                sigma = -1.0
                break
        if j < 0:
            return 0

        # Ratio test with Bland tie-breaking on the leaving variable index.
        rmin = np.inf
        r = -1
        for i in range(m):
            a = sigma * T[i, j]
            if a > piv_tol:
                ratio = (xB[i] - lower[basis[i]]) / a
            elif a < -piv_tol:
                ratio = (xB[i] - upper[basis[i]]) / a
            else:
                continue
            if ratio < 0.0:
                ratio = 0.0
            if ratio < rmin - TIE_TOL:
                rmin = ratio
                r = i
            elif ratio <= rmin + TIE_TOL and r >= 0 and basis[i] < basis[r]:
                r = i
        span = upper[j] - lower[j]

        if span < rmin - TIE_TOL:
            for i in range(m):
                xB[i] -= sigma * span * T[i, j]
            vstat[j] = 1 - vstat[j]
            continue

        delta = rmin
        for i in range(m):
            xB[i] -= sigma * delta * T[i, j]
        leaving = basis[r]
        if sigma * T[r, j] > 0:
            vstat[leaving] = 0
        else:
            vstat[leaving] = 1
        if sigma > 0:
            x_enter = lower[j] + delta
        else:
            x_enter = upper[j] - delta

        piv = T[r, j]
        for jj in range(n):
            T[r, jj] /= piv
        for i in range(m):
            if i == r:
                continue
            factor = T[i, j]
            if factor != 0.0:
                for jj in range(n):
                    T[i, jj] -= factor * T[r, jj]
        xB[r] = x_enter
        basis[r] = j
        vstat[j] = 2
    return 1
