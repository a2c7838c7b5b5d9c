"""Real-valued functionals on a function space: evaluation plus the exact
gradient field representing the derivative under the weighted inner
product, so that for every direction h

    d/dt f(u + t h) |_{t=0} = <h, gradient(u)>.

The analytic functionals (linear, quadratic, ridge) come with closed-form
gradients and serve as oracles for the subspace estimator; the Poisson
distributed-control objective exercises the full PDE-adjoint path.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NotOrthonormalError, SolverError
from .hilbert import Field, Subspace, inner_product, norm, pairwise_inner

RIESZ_FD_STEP = 1e-5


class Functional(abc.ABC):
    """Evaluation + gradient interface.

    The *_batch methods operate on stacked field values (B, n_nodes) and
    default to per-sample loops; subclasses override them when a vectorized
    form exists.  Implementations are immutable and reentrant.
    """

    space = None

    @abc.abstractmethod
    def evaluate(self, u):
        """f(u) as a float."""

    @abc.abstractmethod
    def gradient(self, u):
        """Gradient field at u."""

    def evaluate_batch(self, U):
        return np.array([self.evaluate(Field(self.space, row)) for row in U])

    def gradient_batch(self, U):
        return np.array([self.gradient(Field(self.space, row)).values for row in U])


class LinearFunctional(Functional):
    """f(u) = <u, h1> + <u, h2>; the gradient is the constant field h1 + h2."""

    def __init__(self, h1, h2):
        if h1.space != h2.space:
            raise ValueError("h1 and h2 must share a space")
        self.space = h1.space
        self.h1 = h1
        self.h2 = h2
        self._g = h1 + h2

    def evaluate(self, u):
        return inner_product(u, self.h1) + inner_product(u, self.h2)

    def gradient(self, u):
        return self._g

    def evaluate_batch(self, U):
        return pairwise_inner(self.space, U, self._g.values[None, :])[:, 0]

    def gradient_batch(self, U):
        return np.broadcast_to(self._g.values, (U.shape[0], self.space.n_nodes)).copy()


def linear_functional(h1, h2):
    return LinearFunctional(h1, h2)


class QuadraticFunctional(Functional):
    """f(u) = 1/2 sum_j a_j <u, phi_j>^2 for an orthonormal family phi_j.

    gradient(u) = sum_j a_j <u, phi_j> phi_j.  With phi_j equal to the KL
    functions of a zero-mean Gaussian input law, the second-moment operator
    of the gradient has eigenpairs (a_j^2 * kl_j, phi_j) in closed form.
    """

    def __init__(self, pairs):
        pairs = list(pairs)
        if not pairs:
            raise ValueError("need at least one (field, coefficient) pair")
        fields = [p[0] for p in pairs]
        self.coeffs = np.array([float(p[1]) for p in pairs])
        basis = Subspace.from_fields(fields)
        gram = basis.gram()
        err = np.max(np.abs(gram - np.eye(basis.dim)))
        if err > 1e-8:
            raise NotOrthonormalError(
                f"quadratic basis must be orthonormal (Gram deviates by {err:.3e})"
            )
        self.basis = Subspace(basis.space, basis.vectors, orthonormal=True, tol=1e-8)
        self.space = basis.space

    def evaluate(self, u):
        t = self.basis.coefficients(u)
        return 0.5 * float(np.sum(self.coeffs * t * t))

    def gradient(self, u):
        t = self.basis.coefficients(u)
        return Field(self.space, (self.coeffs * t) @ self.basis.vectors)

    def evaluate_batch(self, U):
        T = self.basis.coefficients(U)
        return 0.5 * np.sum(self.coeffs * T * T, axis=1)

    def gradient_batch(self, U):
        T = self.basis.coefficients(U)
        return (self.coeffs * T) @ self.basis.vectors


def quadratic_functional(pairs):
    return QuadraticFunctional(pairs)


class Profile(abc.ABC):
    """Smooth scalar map on R^n used as the outer function of a ridge."""

    @abc.abstractmethod
    def value(self, t):
        ...

    @abc.abstractmethod
    def grad(self, t):
        ...

    def value_batch(self, T):
        return np.array([self.value(t) for t in T])

    def grad_batch(self, T):
        return np.array([self.grad(t) for t in T])


class LinearProfile(Profile):
    """t -> sum_i w_i t_i."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)

    def value(self, t):
        return float(np.dot(self.weights, t))

    def grad(self, t):
        return self.weights.copy()

    def value_batch(self, T):
        return T @ self.weights

    def grad_batch(self, T):
        return np.broadcast_to(self.weights, T.shape).copy()


class QuadraticProfile(Profile):
    """t -> 1/2 sum_i c_i t_i^2 + sum_i s_i t_i."""

    def __init__(self, curvatures, slopes=None):
        self.curvatures = np.asarray(curvatures, dtype=np.float64)
        self.slopes = (
            np.zeros_like(self.curvatures)
            if slopes is None
            else np.asarray(slopes, dtype=np.float64)
        )

    def value(self, t):
        t = np.asarray(t)
        return float(0.5 * np.dot(self.curvatures, t * t) + np.dot(self.slopes, t))

    def grad(self, t):
        return self.curvatures * np.asarray(t) + self.slopes

    def value_batch(self, T):
        return 0.5 * (T * T) @ self.curvatures + T @ self.slopes

    def grad_batch(self, T):
        return self.curvatures * T + self.slopes


class SineProfile(Profile):
    """t -> sum_i a_i sin(w_i t_i); a smooth nonconvex test profile."""

    def __init__(self, amplitudes, frequencies):
        self.amplitudes = np.asarray(amplitudes, dtype=np.float64)
        self.frequencies = np.asarray(frequencies, dtype=np.float64)

    def value(self, t):
        return float(np.sum(self.amplitudes * np.sin(self.frequencies * np.asarray(t))))

    def grad(self, t):
        return self.amplitudes * self.frequencies * np.cos(self.frequencies * np.asarray(t))

    def value_batch(self, T):
        return np.sum(self.amplitudes * np.sin(self.frequencies * T), axis=1)

    def grad_batch(self, T):
        return self.amplitudes * self.frequencies * np.cos(self.frequencies * T)


class RidgeFunctional(Functional):
    """f(u) = profile(<u, w_1>, ..., <u, w_n>) for an orthonormal basis.

    The gradient sum_i d_i profile * w_i lies in span(w) exactly, so the
    gradient second-moment operator has rank at most n.
    """

    def __init__(self, subspace, profile):
        if not subspace.orthonormal:
            raise NotOrthonormalError("ridge basis must be orthonormal")
        if subspace.dim > 5:
            raise ValueError("ridge dimension capped at 5")
        self.subspace = subspace
        self.profile = profile
        self.space = subspace.space

    def evaluate(self, u):
        return self.profile.value(self.subspace.coefficients(u))

    def gradient(self, u):
        g = self.profile.grad(self.subspace.coefficients(u))
        return Field(self.space, g @ self.subspace.vectors)

    def evaluate_batch(self, U):
        return self.profile.value_batch(self.subspace.coefficients(U))

    def gradient_batch(self, U):
        return self.profile.grad_batch(self.subspace.coefficients(U)) @ self.subspace.vectors


def ridge_functional(subspace, profile):
    return RidgeFunctional(subspace, profile)


def _default_desired_state(space):
    return space.field_from_function(
        lambda x, y: np.sin(4 * np.pi * x) * np.sin(np.pi * y)
    )


@dataclass
class PoissonControlProblem:
    """Distributed control of the Poisson equation on a Dirichlet grid.

    Cost of a control m is

        J(m) = 1/2 |v - v_d|^2 + alpha/2 |m|^2,   -Laplace(v) = m, v = 0 on the boundary,

    with the L2 Tikhonov term keeping the problem well posed.  The default
    desired state is v_d(x, y) = sin(4 pi x) sin(pi y).
    """

    space: object
    desired_state: object = None
    alpha: float = 1e-4
    solver_tol: float = 1e-10
    solver_max_iter: int = 10_000

    def __post_init__(self):
        if self.space.nx < 17 or self.space.ny < 17:
            raise ValueError("poisson control needs a grid of at least 17x17")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.desired_state is None:
            self.desired_state = _default_desired_state(self.space)
        elif self.desired_state.space != self.space:
            raise ValueError("desired_state must live on the problem space")


class PoissonControlFunctional(Functional):
    """Misfit-plus-regularization objective with the adjoint gradient.

    gradient(m) = p + alpha*m where the adjoint p solves -Laplace(p) = v - v_d
    with zero boundary data; p is already a field of the space (no extra
    Riesz weighting), because the discrete state map is self-adjoint under
    the weighted inner product.
    """

    def __init__(self, problem):
        self.problem = problem
        self.space = problem.space

    def _solve(self, rhs_grid):
        p = self.problem
        sol, iters, res = _kernels.solve_poisson(
            rhs_grid[1:-1, 1:-1], p.space.hx, p.space.hy, p.solver_tol, p.solver_max_iter
        )
        if res > p.solver_tol:
            raise SolverError(
                f"CG stalled at relative residual {res:.3e} after {iters} iterations",
                residual=res,
                iterations=iters,
            )
        full = np.zeros((p.space.ny, p.space.nx))
        full[1:-1, 1:-1] = sol
        return full

    def solve_state(self, m):
        """State field v with -Laplace(v) = m and zero boundary values."""
        return Field.from_grid(self.space, self._solve(m.grid()))

    def evaluate(self, m):
        v = self.solve_state(m)
        misfit = v - self.problem.desired_state
        return 0.5 * norm(misfit) ** 2 + 0.5 * self.problem.alpha * norm(m) ** 2

    def gradient(self, m):
        v = self.solve_state(m)
        misfit = v - self.problem.desired_state
        adjoint = self._solve(misfit.grid())
        return Field(self.space, adjoint.ravel() + self.problem.alpha * m.values)


def poisson_control(problem):
    return PoissonControlFunctional(problem)


@dataclass
class GradientCheckReport:
    """Per-direction relative errors of the gradient against central finite
    differences of the functional."""

    relative_errors: np.ndarray
    step: float

    @property
    def max_error(self):
        return float(np.max(self.relative_errors))


def check_gradient(f, u, directions, step=RIESZ_FD_STEP):
    """Compare <h, gradient(u)> with (f(u + s h) - f(u - s h)) / 2s for each
    direction h; the relative error divides by |<h, gradient(u)>| + 1e-12."""
    if step <= 0:
        raise ValueError("step must be positive")
    g = f.gradient(u)
    errs = []
    for h in directions:
        exact = inner_product(h, g)
        fd = (f.evaluate(u + step * h) - f.evaluate(u - step * h)) / (2 * step)
        errs.append(abs(fd - exact) / (abs(exact) + 1e-12))
    return GradientCheckReport(np.array(errs), step)
