"""Gaussian measures on function spaces, sampled by truncated
Karhunen-Loeve expansion:

    U = mean + sum_m sqrt(lambda_m) xi_m phi_m,   xi_m iid N(0, 1),

with orthonormal phi_m and positive, nonincreasing lambda_m.  Sampling is
deterministic per (seed, sample index): each sample draws its coefficients
from its own child of a SeedSequence, so results do not depend on how the
work is distributed across workers.
"""

from __future__ import annotations

import numpy as np

from .errors import NotTraceClassError
from .hilbert import Field, Subspace

KL_ORTHONORMAL_TOL = 1e-10


class GaussianMeasure:
    """Mean field plus truncated KL eigenpairs defining a Gaussian law.

    kl_values must be strictly positive and nonincreasing; kl_functions is
    an orthonormal Subspace with one basis element per eigenvalue.  A
    measure with zero modes is allowed and degenerates to a point mass at
    the mean.
    """

    def __init__(self, space, mean, kl_values, kl_functions, seed=0):
        kl_values = np.asarray(kl_values, dtype=np.float64)
        if kl_values.ndim != 1:
            raise ValueError("kl_values must be a flat array")
        if kl_values.size and not np.all(kl_values > 0):
            raise ValueError("kl_values must be strictly positive")
        if np.any(np.diff(kl_values) > 0):
            raise ValueError("kl_values must be nonincreasing")
        if not isinstance(kl_functions, Subspace) or not kl_functions.orthonormal:
            raise ValueError("kl_functions must be an orthonormal Subspace")
        if kl_functions.dim != kl_values.size:
            raise ValueError(
                f"{kl_values.size} eigenvalues but {kl_functions.dim} eigenfunctions"
            )
        if mean.space != space or kl_functions.space != space:
            raise ValueError("mean and kl_functions must live on `space`")
        kl_values.setflags(write=False)
        self.space = space
        self.mean = mean
        self.kl_values = kl_values
        self.kl_functions = kl_functions
        self.seed = int(seed)

    @property
    def n_modes(self):
        return self.kl_values.size

    @property
    def trace(self):
        """Total variance sum(kl_values)."""
        return float(np.sum(self.kl_values))

    def sample_coefficients(self, count, seed=None):
        """(count, M) array of iid standard normal KL coefficients.

        Row b is drawn from the substream keyed by (seed, b), so rows are
        reproducible individually and prefixes agree across different
        counts with the same seed.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        seed = self.seed if seed is None else int(seed)
        root = np.random.SeedSequence(entropy=seed)
        xi = np.empty((count, self.n_modes))
        for b, child in enumerate(root.spawn(count)):
            xi[b] = np.random.default_rng(child).standard_normal(self.n_modes)
        return xi

    def fields_from_coefficients(self, xi):
        """Realize KL coefficient rows as stacked field values (B, n_nodes).

        Shared coefficients realized on different grids (same modes) give
        corresponding fields, which is what allows cross-mesh comparisons.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
        scaled = xi * np.sqrt(self.kl_values)
        return self.mean.values + scaled @ self.kl_functions.vectors

    def sample_matrix(self, count, seed=None):
        """Stacked sample values, shape (count, n_nodes)."""
        return self.fields_from_coefficients(self.sample_coefficients(count, seed))

    def sample(self, count, seed=None):
        """List of `count` sampled Fields."""
        return [Field(self.space, v) for v in self.sample_matrix(count, seed)]


def sample(measure, count, seed):
    """Draw `count` iid fields from the measure (see GaussianMeasure.sample)."""
    return measure.sample(count, seed)


def mean_only_measure(space, mean, seed=0):
    """Point mass at `mean`: a measure with zero KL modes."""
    empty = Subspace(space, np.empty((0, space.n_nodes)), orthonormal=True)
    return GaussianMeasure(space, mean, np.empty(0), empty, seed=seed)


def separable_sine_measure(space, m_per_axis, decay, amplitude=1.0, seed=0):
    """Zero-mean measure with KL basis 2 sin(i pi x) sin(j pi y) on the unit
    square and eigenvalues amplitude * (i^2 + j^2)^(-decay), i, j = 1..m.

    decay must exceed 1 for the full (untruncated) spectrum to be summable.
    The sine products are exactly orthonormal under the trapezoid inner
    product provided i, j <= n-2 along each axis.
    """
    if decay <= 1:
        raise NotTraceClassError(
            f"decay must exceed 1 for a summable spectrum, got {decay}"
        )
    m = int(m_per_axis)
    if m < 1:
        raise ValueError("m_per_axis must be >= 1")
    if m > min(space.nx, space.ny) - 2:
        raise ValueError(
            f"m_per_axis={m} too large for a {space.nx}x{space.ny} grid "
            "(sine modes alias beyond n-2)"
        )
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    if space.origin != (0.0, 0.0) or not (
        abs((space.nx - 1) * space.hx - 1.0) < 1e-12
        and abs((space.ny - 1) * space.hy - 1.0) < 1e-12
    ):
        raise ValueError("separable sine basis requires the unit square")

    x, y = space.x, space.y
    modes = []
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            value = amplitude * float(i * i + j * j) ** (-decay)
            phi = np.outer(
                2.0 * np.sin(j * np.pi * y), np.sin(i * np.pi * x)
            ).ravel()
            modes.append((value, i, j, phi))
    modes.sort(key=lambda t: (-t[0], t[1], t[2]))

    values = np.array([t[0] for t in modes])
    vectors = np.array([t[3] for t in modes])
    functions = Subspace(space, vectors, orthonormal=True, tol=KL_ORTHONORMAL_TOL)
    measure = GaussianMeasure(
        space, space.zero_field(), values, functions, seed=seed
    )
    measure.mode_indices = tuple((t[1], t[2]) for t in modes)
    return measure
