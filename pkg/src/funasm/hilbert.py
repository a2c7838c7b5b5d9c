"""Discretized L2 spaces on rectangular grids.

A :class:`FunctionSpace` is a uniform tensor grid together with quadrature
weights; the weights define the inner product

    <u, v> = sum_k w_k u_k v_k,

which approximates the integral of u*v over the domain.  A :class:`Field`
is a coefficient vector over the grid nodes, stored row-major with y outer:
node k = iy*nx + ix sits at (origin_x + ix*hx, origin_y + iy*hy).

Everything here is immutable after construction and safe to use from
concurrent workers.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import (
    EmptyBasisError,
    NotOrthonormalError,
    SingularRieszError,
    SpaceMismatchError,
)

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
DEPENDENT_DROP_TOL = 1e-12


def trapezoid_weights(nx, ny, hx, hy):
    """Tensor-product trapezoid weights: hx*hy interior, halved on edges,
    quartered at corners.  Exact for piecewise-bilinear integrands."""
    wx = np.full(nx, hx)
    wx[0] *= 0.5
    wx[-1] *= 0.5
    wy = np.full(ny, hy)
    wy[0] *= 0.5
    wy[-1] *= 0.5
    return np.outer(wy, wx).ravel()


class FunctionSpace:
    """Uniform rectangular grid plus quadrature weights.

    Parameters
    ----------
    nx, ny : node counts per axis (>= 2).
    hx, hy : grid spacings (> 0).
    weights : flat array of nx*ny nonnegative quadrature weights,
        row-major with y outer.
    origin : coordinates of node (ix=0, iy=0).
    """

    def __init__(self, nx, ny, hx, hy, weights, origin=(0.0, 0.0)):
        nx, ny = int(nx), int(ny)
        if nx < 2 or ny < 2:
            raise ValueError(f"need at least 2 nodes per axis, got {nx}x{ny}")
        if not (hx > 0 and hy > 0):
            raise ValueError(f"grid spacings must be positive, got ({hx}, {hy})")
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.shape != (nx * ny,):
            raise ValueError(f"expected {nx * ny} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")
        w.setflags(write=False)
        self.nx = nx
        self.ny = ny
        self.hx = float(hx)
        self.hy = float(hy)
        self.weights = w
        self.origin = (float(origin[0]), float(origin[1]))

    @property
    def n_nodes(self):
        return self.nx * self.ny

    @property
    def x(self):
        """Node x-coordinates, length nx."""
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self):
        """Node y-coordinates, length ny."""
        return self.origin[1] + self.hy * np.arange(self.ny)

    def node_coords(self):
        """Flat (X, Y) coordinate arrays in node order."""
        X, Y = np.meshgrid(self.x, self.y)
        return X.ravel(), Y.ravel()

    def zero_field(self):
        return Field(self, np.zeros(self.n_nodes))

    def field_from_function(self, fn):
        """Sample fn(x, y) at the nodes (fn must broadcast over arrays)."""
        X, Y = self.node_coords()
        return Field(self, np.asarray(fn(X, Y), dtype=np.float64))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, FunctionSpace):
            return NotImplemented
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and self.hx == other.hx
            and self.hy == other.hy
            and self.origin == other.origin
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.nx, self.ny, self.hx, self.hy, self.origin))

    def __repr__(self):
        return (
            f"FunctionSpace(nx={self.nx}, ny={self.ny}, hx={self.hx:g}, "
            f"hy={self.hy:g}, origin={self.origin})"
        )


def grid_space(nx, ny, hx, hy, origin=(0.0, 0.0)):
    """Rectangular grid with trapezoid quadrature weights."""
    return FunctionSpace(nx, ny, hx, hy, trapezoid_weights(nx, ny, hx, hy), origin)


def unit_square_space(n, ny=None):
    """n x n (or n x ny) grid on [0,1]^2 with trapezoid weights."""
    ny = n if ny is None else ny
    return grid_space(n, ny, 1.0 / (n - 1), 1.0 / (ny - 1))


class Field:
    """An element of the discretized space: nx*ny coefficients, row-major
    y-outer, all finite.  Supports +, -, and scalar multiplication."""

    __slots__ = ("space", "values")

    def __init__(self, space, values):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.shape != (space.n_nodes,):
            raise ValueError(
                f"expected {space.n_nodes} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self.space = space
        self.values = v

    def grid(self):
        """Values reshaped to (ny, nx)."""
        return self.values.reshape(self.space.ny, self.space.nx)

    @classmethod
    def from_grid(cls, space, array2d):
        a = np.asarray(array2d, dtype=np.float64)
        if a.shape != (space.ny, space.nx):
            raise ValueError(f"expected shape {(space.ny, space.nx)}, got {a.shape}")
        return cls(space, a.ravel())

    def __add__(self, other):
        _check_same_space(self, other)
        return Field(self.space, self.values + other.values)

    def __sub__(self, other):
        _check_same_space(self, other)
        return Field(self.space, self.values - other.values)

    def __mul__(self, scalar):
        return Field(self.space, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.space, -self.values)

    def __repr__(self):
        return f"Field({self.space.nx}x{self.space.ny}, |u|={norm(self):.4g})"


def _check_same_space(u, v):
    if u.space is not v.space and u.space != v.space:
        raise SpaceMismatchError(
            f"fields live on different spaces: {u.space!r} vs {v.space!r}"
        )


def inner_product(u, v):
    """Weighted inner product <u, v> = sum_k w_k u_k v_k."""
    _check_same_space(u, v)
    return float(np.dot(u.space.weights * u.values, v.values))


def norm(u):
    """Norm induced by the weighted inner product."""
    return float(np.sqrt(np.dot(u.space.weights * u.values, u.values)))


def pairwise_inner(space, U, V=None):
    """Matrix of weighted inner products between the rows of U and V.

    U, V are (m, n_nodes) arrays of stacked field values; V defaults to U.
    """
    U = np.atleast_2d(U)
    V = U if V is None else np.atleast_2d(V)
    return (U * space.weights) @ V.T


def riesz_map(space, dual_coeffs):
    """Convert Euclidean derivative coefficients into the field g
    representing the derivative against the weighted inner product:
    g_k = dual_k / w_k, so that <h, g> = sum_k dual_k h_k for every h.

    Raises ``SingularRieszError`` when a nonzero dual coefficient sits on a
    zero-weight node.
    """
    d = np.asarray(dual_coeffs, dtype=np.float64)
    if d.shape != (space.n_nodes,):
        raise ValueError(f"expected {space.n_nodes} dual coefficients, got {d.shape}")
    w = space.weights
    dead = w == 0.0
    if np.any(dead & (d != 0.0)):
        k = int(np.argmax(dead & (d != 0.0)))
        raise SingularRieszError(
            f"nonzero dual coefficient at zero-weight node {k}"
        )
    g = np.zeros_like(d)
    np.divide(d, w, out=g, where=~dead)
    return Field(space, g)


class Subspace:
    """A finite span inside a function space.

    ``vectors`` holds the basis stacked as rows, shape (n, n_nodes).  When
    ``orthonormal`` is set the constructor verifies the Gram matrix against
    the identity (tolerance ``tol``).
    """

    def __init__(self, space, vectors, orthonormal=False, tol=ORTHONORMAL_TOL):
        v = np.ascontiguousarray(vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != space.n_nodes:
            raise ValueError(
                f"expected (n, {space.n_nodes}) basis array, got shape {v.shape}"
            )
        if orthonormal and v.shape[0] > 0:
            gram = pairwise_inner(space, v)
            err = np.max(np.abs(gram - np.eye(v.shape[0])))
            if err > tol:
                raise NotOrthonormalError(
                    f"basis marked orthonormal but Gram deviates by {err:.3e}"
                )
        v.setflags(write=False)
        self.space = space
        self.vectors = v
        self.orthonormal = bool(orthonormal)

    @classmethod
    def from_fields(cls, fields, orthonormal=False, tol=ORTHONORMAL_TOL):
        fields = list(fields)
        if not fields:
            raise EmptyBasisError("no basis fields given")
        space = fields[0].space
        for f in fields[1:]:
            _check_same_space(fields[0], f)
        return cls(space, np.array([f.values for f in fields]), orthonormal, tol)

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def basis(self):
        """Basis as a tuple of Fields."""
        return tuple(Field(self.space, v) for v in self.vectors)

    def coefficients(self, u):
        """Inner products of u against the basis.

        u may be a Field, a flat value array, or a (B, n_nodes) batch;
        returns shape (n,) or (B, n) accordingly.
        """
        vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
        batch = vals.ndim == 2
        c = (np.atleast_2d(vals) * self.space.weights) @ self.vectors.T
        return c if batch else c[0]

    def combine(self, coeffs):
        """Linear combination of the basis; accepts a batch of coefficient
        rows and then returns a (B, n_nodes) array instead of a Field."""
        c = np.asarray(coeffs, dtype=np.float64)
        if c.ndim == 2:
            return c @ self.vectors
        return Field(self.space, c @ self.vectors)

    def gram(self):
        return pairwise_inner(self.space, self.vectors)

    def __repr__(self):
        tag = "orthonormal" if self.orthonormal else "raw"
        return f"Subspace(dim={self.dim}, {tag})"


def project(u, A):
    """Orthogonal projection of u onto the span of A (A must be flagged
    orthonormal; no silent re-orthonormalization)."""
    if not A.orthonormal:
        raise NotOrthonormalError("projection requires an orthonormal basis")
    if u.space != A.space:
        raise SpaceMismatchError("field and subspace live on different spaces")
    if A.dim == 0:
        return A.space.zero_field()
    return Field(u.space, A.coefficients(u) @ A.vectors)


def orthonormalize(basis, drop_tol=DEPENDENT_DROP_TOL):
    """Modified Gram-Schmidt under the weighted inner product, with one
    re-orthogonalization pass.

    Input vectors whose norm after deflation falls below
    drop_tol * (max input norm) are dropped; the drop count is logged and
    recoverable as len(basis) - result.dim.
    """
    fields = list(basis)
    if not fields:
        raise EmptyBasisError("cannot orthonormalize an empty basis")
    space = fields[0].space
    for f in fields[1:]:
        _check_same_space(fields[0], f)
    w = space.weights
    V = np.array([f.values for f in fields], dtype=np.float64)
    max_norm = np.max(np.sqrt(np.sum(V * V * w, axis=1)))
    if max_norm == 0.0:
        raise EmptyBasisError("all basis vectors are zero")

    kept = []
    dropped = 0
    for v in V:
        v = v.copy()
        for _ in range(2):  # second sweep: re-orthogonalization
            for q in kept:
                v -= np.dot(w * q, v) * q
        nrm = np.sqrt(np.dot(w * v, v))
        if nrm < drop_tol * max_norm:
            dropped += 1
            continue
        kept.append(v / nrm)
    if not kept:
        raise EmptyBasisError("all basis vectors were dropped as dependent")
    if dropped:
        logger.info("orthonormalize: dropped %d dependent vector(s)", dropped)
    return Subspace(space, np.array(kept), orthonormal=True)


def principal_angles(A, B):
    """Principal angles (radians, ascending) between two orthonormal
    subspaces of the same space."""
    if not (A.orthonormal and B.orthonormal):
        raise NotOrthonormalError("principal angles need orthonormal bases")
    if A.space != B.space:
        raise SpaceMismatchError("subspaces live on different spaces")
    cross = pairwise_inner(A.space, A.vectors, B.vectors)
    s = np.linalg.svd(cross, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))[::-1]
