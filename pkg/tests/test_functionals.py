import numpy as np
import pytest
from numpy.testing import assert_allclose

from funasm.errors import NotOrthonormalError, SolverError
from funasm.functionals import (
    LinearProfile,
    PoissonControlProblem,
    QuadraticProfile,
    SineProfile,
    check_gradient,
    linear_functional,
    poisson_control,
    quadratic_functional,
    ridge_functional,
)
from funasm.hilbert import (
    Field,
    inner_product,
    norm,
    orthonormalize,
    project,
    unit_square_space,
)
from funasm.randfield import separable_sine_measure

from conftest import random_field, random_fields


@pytest.fixture(scope="module")
def measure33():
    return separable_sine_measure(unit_square_space(33), 6, 2.0)


class TestLinearFunctional:
    def test_zero_input(self, space33, rng):
        f = linear_functional(*random_fields(space33, rng, 2))
        assert f.evaluate(space33.zero_field()) == 0.0

    def test_gradient_constant(self, space33, rng):
        h1, h2 = random_fields(space33, rng, 2)
        f = linear_functional(h1, h2)
        expected = h1.values + h2.values
        for _ in range(5):
            g = f.gradient(random_field(space33, rng))
            assert_allclose(g.values, expected, rtol=0, atol=0)

    def test_equal_unit_directions(self, space33, rng):
        w = random_field(space33, rng)
        w = (1.0 / norm(w)) * w
        f = linear_functional(w, w)
        assert f.evaluate(w) == pytest.approx(2.0, abs=1e-12)

    def test_batch_matches_loop(self, space33, rng, measure33):
        f = linear_functional(*random_fields(space33, rng, 2))
        U = measure33.sample_matrix(4, seed=0)
        assert_allclose(f.evaluate_batch(U), [f.evaluate(Field(space33, u)) for u in U])
        assert_allclose(
            f.gradient_batch(U), [f.gradient(Field(space33, u)).values for u in U]
        )


class TestQuadraticFunctional:
    @pytest.fixture
    def quad(self, measure33):
        basis = measure33.kl_functions.basis[:3]
        return quadratic_functional(list(zip(basis, [2.0, 1.0, 0.5])))

    def test_orthogonal_input_gives_zero(self, quad, measure33):
        phi_far = measure33.kl_functions.basis[10]
        assert quad.evaluate(phi_far) == pytest.approx(0.0, abs=1e-20)
        assert norm(quad.gradient(phi_far)) < 1e-12

    def test_single_pair_scaling(self, measure33):
        phi = measure33.kl_functions.basis[0]
        f = quadratic_functional([(phi, 3.0)])
        for t in (0.5, -1.25, 2.0):
            assert f.evaluate(t * phi) == pytest.approx(0.5 * 3.0 * t * t, rel=1e-12)

    def test_gradient_formula(self, quad, measure33, rng):
        u = random_field(measure33.space, rng)
        t = quad.basis.coefficients(u)
        expected = (quad.coeffs * t) @ quad.basis.vectors
        assert_allclose(quad.gradient(u).values, expected)

    def test_requires_orthonormal_basis(self, space33, rng):
        h = random_field(space33, rng)
        with pytest.raises(NotOrthonormalError):
            quadratic_functional([(h, 1.0), (2.0 * h, 1.0)])

    def test_batch_matches_loop(self, quad, measure33):
        U = measure33.sample_matrix(5, seed=1)
        space = measure33.space
        assert_allclose(
            quad.evaluate_batch(U), [quad.evaluate(Field(space, u)) for u in U]
        )
        assert_allclose(
            quad.gradient_batch(U), [quad.gradient(Field(space, u)).values for u in U]
        )


class TestRidgeFunctional:
    @pytest.fixture
    def basis(self, space33, rng):
        return orthonormalize(random_fields(space33, rng, 3))

    def test_sum_profile_constant_gradient(self, basis, space33, rng):
        f = ridge_functional(basis, LinearProfile(np.ones(3)))
        expected = basis.vectors.sum(axis=0)
        for _ in range(3):
            g = f.gradient(random_field(space33, rng))
            assert_allclose(g.values, expected)

    def test_gradient_in_span(self, basis, space33, rng):
        f = ridge_functional(
            basis, QuadraticProfile([1.0, 2.0, 3.0], [0.5, 0.0, -0.25])
        )
        for _ in range(20):
            g = f.gradient(random_field(space33, rng))
            perp = g - project(g, basis)
            assert norm(perp) <= 1e-12 * max(1.0, norm(g))

    def test_level_set_invariance(self, basis, space33, rng):
        f = ridge_functional(basis, SineProfile([1.0, 0.5, 2.0], [2.0, 1.0, 0.5]))
        for _ in range(10):
            u = random_field(space33, rng)
            z = random_field(space33, rng)
            z = z - project(z, basis)
            assert f.evaluate(u + z) == pytest.approx(f.evaluate(u), abs=1e-10)

    def test_dimension_cap(self, space33, rng):
        big = orthonormalize(random_fields(space33, rng, 6))
        with pytest.raises(ValueError):
            ridge_functional(big, LinearProfile(np.ones(6)))


@pytest.fixture(scope="module")
def functional65():
    return poisson_control(PoissonControlProblem(unit_square_space(65)))


@pytest.fixture(scope="module")
def functional33():
    return poisson_control(PoissonControlProblem(unit_square_space(33)))


class TestPoissonControl:
    def test_zero_control_cost(self, functional65):
        # state is zero, so J = 0.5 * |v_d|^2 = 0.5 * 1/4 by the closed-form
        # integral of sin^2(4 pi x) sin^2(pi y)
        J = functional65.evaluate(functional65.space.zero_field())
        assert J == pytest.approx(0.125, abs=1e-3)

    def test_state_solve_residual(self, functional33, rng):
        m = random_field(functional33.space, rng)
        v = functional33.solve_state(m)
        from funasm._kernels import apply_neg_laplacian

        space = functional33.space
        res = apply_neg_laplacian(v.grid()[1:-1, 1:-1], space.hx, space.hy)
        rhs = m.grid()[1:-1, 1:-1]
        rel = np.linalg.norm(res - rhs) / np.linalg.norm(rhs)
        assert rel <= functional33.problem.solver_tol * 10

    def test_state_map_self_adjoint(self, functional33, rng):
        for _ in range(3):
            m1 = random_field(functional33.space, rng)
            m2 = random_field(functional33.space, rng)
            lhs = inner_product(functional33.solve_state(m1), m2)
            rhs = inner_product(m1, functional33.solve_state(m2))
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))

    def test_large_alpha_gradient_dominated_by_regularizer(self):
        problem = PoissonControlProblem(unit_square_space(33), alpha=1e3)
        f = poisson_control(problem)
        rng = np.random.default_rng(0)
        m = random_field(f.space, rng)
        g = f.gradient(m)
        assert norm(g - problem.alpha * m) <= 1e-2 * problem.alpha * norm(m)

    def test_adjoint_gradient_vs_finite_differences(self, functional33, rng):
        space = functional33.space
        measure = separable_sine_measure(space, 6, 2.0)
        u = Field(space, measure.sample_matrix(1, seed=4)[0])
        directions = [Field(space, v) for v in measure.sample_matrix(10, seed=5)]
        report = check_gradient(functional33, u, directions, step=1e-5)
        assert report.max_error < 1e-5

    def test_solver_error_carries_residual(self, rng):
        problem = PoissonControlProblem(unit_square_space(33), solver_max_iter=2)
        f = poisson_control(problem)
        with pytest.raises(SolverError) as err:
            f.evaluate(random_field(f.space, rng))
        assert err.value.residual > 0
        assert err.value.iterations == 2

    def test_grid_minimum_enforced(self):
        with pytest.raises(ValueError):
            PoissonControlProblem(unit_square_space(9))

    def test_default_desired_state(self, functional65):
        space = functional65.space
        expected = space.field_from_function(
            lambda x, y: np.sin(4 * np.pi * x) * np.sin(np.pi * y)
        )
        assert_allclose(functional65.problem.desired_state.values, expected.values)


class TestCheckGradient:
    def test_linear_machine_precision(self, space33, rng):
        # central differences are exact for linear f at any step; the wider
        # step keeps subtraction roundoff out of the way
        f = linear_functional(*random_fields(space33, rng, 2))
        u = random_field(space33, rng)
        report = check_gradient(f, u, random_fields(space33, rng, 10), step=1e-3)
        assert report.max_error < 1e-10

    def test_quadratic_near_exact(self, measure33, rng):
        basis = measure33.kl_functions.basis[:3]
        f = quadratic_functional(list(zip(basis, [2.0, 1.0, 0.5])))
        u = random_field(measure33.space, rng)
        report = check_gradient(f, u, random_fields(measure33.space, rng, 10))
        assert report.max_error < 1e-9

    def test_rejects_bad_step(self, space33, rng):
        f = linear_functional(*random_fields(space33, rng, 2))
        with pytest.raises(ValueError):
            check_gradient(f, random_field(space33, rng), [], step=0.0)


def test_every_functional_passes_gradient_check(measure33, space33, rng):
    # the shared contract: <h, gradient(u)> matches central differences at
    # measure samples
    space = measure33.space
    basis = orthonormalize(random_fields(space, rng, 3))
    # (functional, tolerance, FD step); linear/quadratic use a wide step
    # because central differences are exact for them and roundoff dominates
    cases = [
        (linear_functional(*random_fields(space, rng, 2)), 1e-10, 1e-3),
        (
            quadratic_functional(
                list(zip(measure33.kl_functions.basis[:4], [2.0, 1.0, 0.5, 0.25]))
            ),
            1e-9,
            1e-3,
        ),
        (
            ridge_functional(basis, SineProfile([1.0, 2.0, 0.5], [1.5, 0.7, 3.0])),
            1e-5,
            1e-5,
        ),
        (poisson_control(PoissonControlProblem(unit_square_space(33))), 1e-5, 1e-5),
    ]
    points = measure33.sample(10, seed=21)
    directions = measure33.sample(10, seed=22)
    for f, tol, step in cases:
        for u in points[:3]:
            report = check_gradient(f, u, directions, step=step)
            assert report.max_error < tol, type(f).__name__
