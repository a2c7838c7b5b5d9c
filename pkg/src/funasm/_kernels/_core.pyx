# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: 5-point-stencil Laplacian and the CG loop.

Interior-only arrays, zero Dirichlet data outside; same contract as
``funasm._kernels.pure``.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _apply(double[:, ::1] u, double[:, ::1] out,
                 double cx, double cy) noexcept nogil:
    cdef Py_ssize_t my = u.shape[0]
    cdef Py_ssize_t mx = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double diag = 2.0 * (cx + cy)
    cdef double acc
    for i in range(my):
        for j in range(mx):
            acc = diag * u[i, j]
            if j > 0:
                acc -= cx * u[i, j - 1]
            if j < mx - 1:
                acc -= cx * u[i, j + 1]
            if i > 0:
                acc -= cy * u[i - 1, j]
            if i < my - 1:
                acc -= cy * u[i + 1, j]
            out[i, j] = acc


def apply_neg_laplacian(u, double hx, double hy):
    """5-point-stencil -Laplacian on interior values u (zero outside)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] uu = \
        np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty_like(uu)
    _apply(uu, out, 1.0 / (hx * hx), 1.0 / (hy * hy))
    return out


def solve_poisson(rhs, double hx, double hy, double tol, int max_iter):
    """Conjugate gradient for -Laplace(u) = rhs, zero Dirichlet data.

    Returns (u, iterations, relative_residual).
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] b = \
        np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t my = b.shape[0]
    cdef Py_ssize_t mx = b.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] x = np.zeros((my, mx))
    cdef cnp.ndarray[double, ndim=2, mode="c"] r = b.copy()
    cdef cnp.ndarray[double, ndim=2, mode="c"] p = b.copy()
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ap = np.empty((my, mx))

    cdef double[:, ::1] xv = x
    cdef double[:, ::1] rv = r
    cdef double[:, ::1] pv = p
    cdef double[:, ::1] Av = Ap
    cdef double cx = 1.0 / (hx * hx)
    cdef double cy = 1.0 / (hy * hy)

    cdef double b_norm = 0.0, rr = 0.0
    cdef Py_ssize_t i, j
    cdef int it = 0
    for i in range(my):
        for j in range(mx):
            b_norm += rv[i, j] * rv[i, j]
    rr = b_norm
    b_norm = sqrt(b_norm)
    if b_norm == 0.0:
        return x, 0, 0.0

    cdef double threshold = tol * b_norm
    cdef double pAp, alpha, rr_new, beta
    with nogil:
        while it < max_iter and sqrt(rr) > threshold:
            _apply(pv, Av, cx, cy)
            pAp = 0.0
            for i in range(my):
                for j in range(mx):
                    pAp += pv[i, j] * Av[i, j]
            alpha = rr / pAp
            rr_new = 0.0
            for i in range(my):
                for j in range(mx):
                    xv[i, j] += alpha * pv[i, j]
                    rv[i, j] -= alpha * Av[i, j]
                    rr_new += rv[i, j] * rv[i, j]
            beta = rr_new / rr
            for i in range(my):
                for j in range(mx):
                    pv[i, j] = rv[i, j] + beta * pv[i, j]
            rr = rr_new
            it += 1
    return x, it, sqrt(rr) / b_norm
