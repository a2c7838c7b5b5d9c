"""Downstream modeling in the estimated subspace.

Two pseudometrics drive the KNN machinery: the full weighted L2 distance
between fields, and the "active" distance |P_A(u1 - u2)|, which by
orthonormality of the basis equals the Euclidean distance between the
projection-coefficient vectors.  Leave-one-out cross validation compares
the two over a sweep of K.  For two retained coordinates, a GP conditional
mean on the projected data gives the exported visualization surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotOrthonormalError
from .gp import fit_gp
from .hilbert import Field, pairwise_inner


@dataclass
class ReducedDataset:
    """Projections <u_j, w_i> of N inputs onto n basis directions, with the
    observed values f(u_j) and provenance."""

    coords: np.ndarray
    values: np.ndarray
    basis: object
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.coords.shape[0] != self.values.shape[0]:
            raise ValueError("one value per coordinate row required")

    @property
    def n_active(self):
        return self.coords.shape[1]


@dataclass
class FieldDataset:
    """Raw training fields (stacked values) plus observations; `basis`
    enables the active-distance metric."""

    space: object
    inputs: np.ndarray
    values: np.ndarray
    basis: object = None
    n_active: int = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.inputs.shape[0] != self.values.shape[0]:
            raise ValueError("one value per input row required")

    def reduce(self, source=None):
        """Project onto the leading n_active basis directions."""
        if self.basis is None or not self.basis.orthonormal:
            raise NotOrthonormalError("active metric needs an orthonormal basis")
        n = self.basis.dim if self.n_active is None else int(self.n_active)
        coords = self.basis.coefficients(self.inputs)[:, :n]
        return ReducedDataset(coords, self.values, self.basis, source or {})


def reduce_fields(inputs, values, basis, n=None, source=None):
    """ReducedDataset from stacked input values (or Fields) and a basis."""
    if isinstance(inputs, (list, tuple)) and inputs and isinstance(inputs[0], Field):
        space = inputs[0].space
        inputs = np.array([u.values for u in inputs])
    else:
        space = basis.space
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    return FieldDataset(space, inputs, values, basis, n).reduce(source)


def as_distance(u1, u2, A):
    """|P_A(u1 - u2)|: Euclidean distance between the projection-coefficient
    vectors of u1 and u2 against the orthonormal basis of A."""
    if not A.orthonormal:
        raise NotOrthonormalError("active distance needs an orthonormal basis")
    diff = A.coefficients(u1) - A.coefficients(u2)
    return float(np.sqrt(np.sum(diff * diff)))


def _coord_pairwise(coords_a, coords_b):
    sq = (
        np.sum(coords_a**2, axis=1)[:, None]
        + np.sum(coords_b**2, axis=1)[None, :]
        - 2.0 * coords_a @ coords_b.T
    )
    return np.sqrt(np.clip(sq, 0.0, None))


def _field_pairwise(space, Ua, Ub):
    gram = pairwise_inner(space, Ua, Ub)
    na = np.einsum("ij,ij->i", Ua * space.weights, Ua)
    nb = np.einsum("ij,ij->i", Ub * space.weights, Ub)
    sq = na[:, None] + nb[None, :] - 2.0 * gram
    return np.sqrt(np.clip(sq, 0.0, None))


def _train_distances(train, query_rows, metric):
    """Distance matrix (n_query, N) under the requested metric."""
    if isinstance(train, ReducedDataset):
        if metric not in (None, "as"):
            raise ValueError("a ReducedDataset only supports the 'as' metric")
        return _coord_pairwise(query_rows, train.coords), train.values
    if metric == "l2":
        return _field_pairwise(train.space, query_rows, train.inputs), train.values
    if metric == "as":
        reduced = train.reduce()
        q = reduced.basis.coefficients(query_rows)[:, : reduced.n_active]
        return _coord_pairwise(q, reduced.coords), reduced.values
    raise ValueError(f"unknown metric {metric!r}")


def _query_rows(train, query):
    if isinstance(query, Field):
        rows = query.values[None, :]
    else:
        rows = np.atleast_2d(np.asarray(query, dtype=np.float64))
    if isinstance(train, ReducedDataset) and rows.shape[1] != train.coords.shape[1]:
        # raw field values given against a reduced training set: project
        rows = train.basis.coefficients(rows)[:, : train.n_active]
    return rows


def knn_predict(train, query, k, metric=None):
    """Unweighted mean of the k nearest training values; distance ties are
    broken by training index order.

    train is a ReducedDataset (active metric) or a FieldDataset
    (metric 'l2' or 'as'); query is a Field, flat values, or, for reduced
    training data, a coordinate vector.
    """
    n_train = len(train.values)
    if n_train == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= n_train:
        raise ValueError(f"k must lie in [1, {n_train}], got {k}")
    rows = _query_rows(train, query)
    D, values = _train_distances(train, rows, metric)
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    preds = values[order].mean(axis=1)
    return float(preds[0]) if preds.shape[0] == 1 else preds


def _loo_from_distances(D, values, k_range):
    n = D.shape[0]
    if max(k_range) > n - 1:
        raise ValueError(f"k_range needs at most {n - 1} neighbors")
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    ranked = values[order]
    cums = np.cumsum(ranked, axis=1)
    mses = np.empty(len(k_range))
    for i, k in enumerate(k_range):
        preds = cums[:, k - 1] / k
        mses[i] = float(np.mean((preds - values) ** 2))
    return mses


def loo_cv(dataset, k_range, metric=None):
    """Leave-one-out KNN mean squared error for each K in k_range."""
    k_range = [int(k) for k in k_range]
    if isinstance(dataset, ReducedDataset):
        D = _coord_pairwise(dataset.coords, dataset.coords)
        return _loo_from_distances(D, dataset.values, k_range)
    if metric == "l2":
        D = _field_pairwise(dataset.space, dataset.inputs, dataset.inputs)
        return _loo_from_distances(D, dataset.values, k_range)
    if metric == "as":
        return loo_cv(dataset.reduce(), k_range)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class GpSurface:
    """Gridded conditional-mean surface over the two leading coordinates."""

    x1: np.ndarray
    x2: np.ndarray
    mean: np.ndarray  # shape (len(x2), len(x1)), x2 outer

    def rows(self):
        for i2, b in enumerate(self.x2):
            for i1, a in enumerate(self.x1):
                yield a, b, self.mean[i2, i1]


def gp_surface(dataset, grid_res=64):
    """Zero-mean squared-exponential GP fit on 2-D reduced coordinates;
    returns the posterior mean on a grid spanning the observed coordinate
    ranges extended by 10% on each side."""
    if dataset.n_active != 2:
        raise ValueError("surface export needs exactly 2 reduced coordinates")
    if dataset.coords.shape[0] < 10:
        raise ValueError("need at least 10 observations for the surface")
    spans = dataset.coords.max(axis=0) - dataset.coords.min(axis=0)
    if np.any(spans <= 0):
        raise ValueError("degenerate (zero variance) reduced coordinates")
    model = fit_gp(dataset.coords, dataset.values)
    lo = dataset.coords.min(axis=0) - 0.1 * spans
    hi = dataset.coords.max(axis=0) + 0.1 * spans
    x1 = np.linspace(lo[0], hi[0], grid_res)
    x2 = np.linspace(lo[1], hi[1], grid_res)
    X1, X2 = np.meshgrid(x1, x2)
    mean, _ = model.predict(np.column_stack([X1.ravel(), X2.ravel()]))
    return GpSurface(x1, x2, mean.reshape(grid_res, grid_res))
