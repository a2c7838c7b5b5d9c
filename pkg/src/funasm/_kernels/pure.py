"""NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via the
FUNASM_PURE_KERNELS environment variable).  Semantics match
``funasm._kernels._core`` exactly; see tests/test_kernels.py.

The grid arrays here are interior-only: shape (ny-2, nx-2) for a grid with
homogeneous Dirichlet boundary values.
"""

import numpy as np


def apply_neg_laplacian(u, hx, hy):
    """5-point-stencil -Laplacian on interior values u (zero outside).

    u has shape (my, mx); returns an array of the same shape.
    """
    u = np.asarray(u, dtype=np.float64)
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    out = (2.0 * (cx + cy)) * u
    out[:, 1:] -= cx * u[:, :-1]
    out[:, :-1] -= cx * u[:, 1:]
    out[1:, :] -= cy * u[:-1, :]
    out[:-1, :] -= cy * u[1:, :]
    return out


def solve_poisson(rhs, hx, hy, tol, max_iter):
    """Conjugate gradient for -Laplace(u) = rhs with zero Dirichlet data.

    rhs is interior-only, shape (my, mx).  Iterates until the Euclidean
    residual satisfies |b - A u| <= tol * |b|.  Returns
    (u, iterations, relative_residual); convergence is the caller's job to
    enforce.
    """
    b = np.asarray(rhs, dtype=np.float64)
    b_norm = np.sqrt(np.sum(b * b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.sum(r * r)
    threshold = tol * b_norm
    it = 0
    while it < max_iter and np.sqrt(rr) > threshold:
        Ap = apply_neg_laplacian(p, hx, hy)
        alpha = rr / np.sum(p * Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = np.sum(r * r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x, it, float(np.sqrt(rr) / b_norm)
