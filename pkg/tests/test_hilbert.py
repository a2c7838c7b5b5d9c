import numpy as np
import pytest
from numpy.testing import assert_allclose

from funasm.errors import (
    EmptyBasisError,
    NotOrthonormalError,
    SingularRieszError,
    SpaceMismatchError,
)
from funasm.hilbert import (
    Field,
    FunctionSpace,
    Subspace,
    grid_space,
    inner_product,
    norm,
    orthonormalize,
    pairwise_inner,
    principal_angles,
    project,
    riesz_map,
    trapezoid_weights,
    unit_square_space,
)

from conftest import random_field, random_fields


class TestFunctionSpace:
    def test_trapezoid_weights_sum_to_area(self):
        space = unit_square_space(65)
        assert abs(np.sum(space.weights) - 1.0) < 1e-12

    def test_trapezoid_weights_sum_general_rectangle(self):
        space = grid_space(11, 21, 0.3, 0.05)
        area = 0.3 * 10 * 0.05 * 20
        assert abs(np.sum(space.weights) - area) < 1e-12

    def test_weight_pattern(self):
        w = trapezoid_weights(3, 3, 1.0, 1.0).reshape(3, 3)
        assert w[1, 1] == 1.0
        assert w[0, 1] == w[1, 0] == 0.5
        assert w[0, 0] == w[2, 2] == 0.25

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            FunctionSpace(3, 3, 0.5, 0.5, np.ones(8))
        with pytest.raises(ValueError):
            FunctionSpace(3, 3, -0.5, 0.5, np.ones(9))
        with pytest.raises(ValueError):
            FunctionSpace(3, 3, 0.5, 0.5, -np.ones(9))
        with pytest.raises(ValueError):
            FunctionSpace(3, 3, 0.5, 0.5, np.zeros(9))

    def test_equality(self):
        a = unit_square_space(9)
        b = unit_square_space(9)
        c = unit_square_space(11)
        assert a == b
        assert a != c


class TestField:
    def test_rejects_wrong_length_and_nonfinite(self, space17):
        with pytest.raises(ValueError):
            Field(space17, np.ones(7))
        values = np.ones(space17.n_nodes)
        values[3] = np.nan
        with pytest.raises(ValueError):
            Field(space17, values)

    def test_arithmetic(self, space17, rng):
        u = random_field(space17, rng)
        v = random_field(space17, rng)
        assert_allclose((u + v).values, u.values + v.values)
        assert_allclose((u - v).values, u.values - v.values)
        assert_allclose((2.5 * u).values, 2.5 * u.values)
        assert_allclose((-u).values, -u.values)

    def test_mismatched_spaces_raise(self, space17, space33, rng):
        u = random_field(space17, rng)
        v = random_field(space33, rng)
        with pytest.raises(SpaceMismatchError):
            _ = u + v


class TestInnerProduct:
    def test_zero_field(self, space33, rng):
        v = random_field(space33, rng)
        assert inner_product(space33.zero_field(), v) == 0.0

    def test_constant_one_integrates_to_area(self):
        space = unit_square_space(65)
        ones = Field(space, np.ones(space.n_nodes))
        assert abs(inner_product(ones, ones) - 1.0) < 1e-12

    def test_sine_squared_quarter(self):
        # oracle: integral of sin^2(pi x) sin^2(pi y) over the unit square
        sympy = pytest.importorskip("sympy")
        x, y = sympy.symbols("x y")
        exact = float(
            sympy.integrate(
                sympy.sin(sympy.pi * x) ** 2 * sympy.sin(sympy.pi * y) ** 2,
                (x, 0, 1),
                (y, 0, 1),
            )
        )
        assert exact == 0.25
        space = unit_square_space(65)
        u = space.field_from_function(lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y))
        assert abs(inner_product(u, u) - exact) < 1e-3

    def test_bilinearity(self, space17, rng):
        for _ in range(5):
            a, b = rng.standard_normal(2)
            u, v, z = random_fields(space17, rng, 3)
            lhs = inner_product(a * u + b * v, z)
            rhs = a * inner_product(u, z) + b * inner_product(v, z)
            assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + abs(rhs) + 1)

    def test_symmetry(self, space17, rng):
        u, v = random_fields(space17, rng, 2)
        assert inner_product(u, v) == pytest.approx(inner_product(v, u), rel=1e-14)

    def test_mesh_consistency_order_h2(self):
        # halving h should shrink the quadrature error of a smooth integrand
        # by about 4
        exact = ((np.e**2 - 1) / 2.0) ** 2  # integral of e^(2x+2y)
        errors = []
        for n in (33, 65):
            space = unit_square_space(n)
            u = space.field_from_function(lambda X, Y: np.exp(X + Y))
            errors.append(abs(inner_product(u, u) - exact))
        ratio = errors[0] / errors[1]
        assert 4 * 0.7 < ratio < 4 * 1.3

    def test_space_mismatch(self, space17, space33, rng):
        with pytest.raises(SpaceMismatchError):
            inner_product(random_field(space17, rng), random_field(space33, rng))


class TestNorm:
    def test_zero(self, space17):
        assert norm(space17.zero_field()) == 0.0

    def test_constant_one(self):
        space = unit_square_space(65)
        assert abs(norm(Field(space, np.ones(space.n_nodes))) - 1.0) < 1e-12

    def test_homogeneity(self, space17, rng):
        w = random_field(space17, rng)
        w = (1.0 / norm(w)) * w
        assert abs(norm(2.0 * w) - 2.0) < 1e-12


class TestRieszMap:
    def test_zero_coeffs(self, space17):
        g = riesz_map(space17, np.zeros(space17.n_nodes))
        assert np.all(g.values == 0.0)

    def test_uniform_weights(self):
        space = FunctionSpace(5, 5, 0.25, 0.25, np.full(25, 0.3))
        d = np.arange(25.0)
        g = riesz_map(space, d)
        assert_allclose(g.values, d / 0.3)

    def test_linear_functional_recovers_direction(self, space33, rng):
        # f(u) = <u, h1> has Euclidean partials w_k h1_k; the map must
        # return h1 itself, verified against central differences of f
        h1 = random_field(space33, rng)
        g = riesz_map(space33, space33.weights * h1.values)
        assert_allclose(g.values, h1.values, rtol=0, atol=1e-14)
        u = random_field(space33, rng)
        f = lambda v: inner_product(v, h1)
        eps = 1e-5
        for _ in range(10):
            h = random_field(space33, rng)
            fd = (f(u + eps * h) - f(u - eps * h)) / (2 * eps)
            exact = inner_product(h, g)
            assert abs(fd - exact) / (abs(exact) + 1e-12) < 1e-8

    def test_singular_weight(self):
        weights = np.ones(9)
        weights[4] = 0.0
        space = FunctionSpace(3, 3, 0.5, 0.5, weights)
        bad = np.zeros(9)
        bad[4] = 1.0
        with pytest.raises(SingularRieszError):
            riesz_map(space, bad)
        ok = np.ones(9)
        ok[4] = 0.0
        g = riesz_map(space, ok)
        assert g.values[4] == 0.0


class TestProjection:
    @pytest.fixture
    def basis(self, space33, rng):
        return orthonormalize(random_fields(space33, rng, 4))

    def test_fixes_its_range(self, basis, rng):
        u = basis.combine(rng.standard_normal(basis.dim))
        assert norm(project(u, basis) - u) < 1e-10

    def test_kills_orthogonal_complement(self, space33, basis, rng):
        u = random_field(space33, rng)
        perp = u - project(u, basis)
        assert norm(project(perp, basis)) < 1e-10

    def test_pythagoras(self, space33, basis, rng):
        u = random_field(space33, rng)
        pu = project(u, basis)
        lhs = norm(u) ** 2
        rhs = norm(pu) ** 2 + norm(u - pu) ** 2
        assert abs(lhs - rhs) < 1e-9 * max(1.0, lhs)

    def test_idempotent_and_contractive(self, space33, basis, rng):
        u = random_field(space33, rng)
        pu = project(u, basis)
        assert norm(project(pu, basis) - pu) < 1e-10
        assert norm(pu) <= norm(u) + 1e-10

    def test_requires_orthonormal_flag(self, space33, rng):
        raw = Subspace.from_fields(random_fields(space33, rng, 3))
        with pytest.raises(NotOrthonormalError):
            project(random_field(space33, rng), raw)


class TestOrthonormalize:
    def test_orthonormal_input_unchanged(self, space33, rng):
        basis = orthonormalize(random_fields(space33, rng, 2))
        again = orthonormalize(basis.basis)
        assert_allclose(again.vectors, basis.vectors, atol=1e-12)
        assert_allclose(again.gram(), np.eye(2), atol=1e-12)

    def test_dependent_pair_collapses(self, space33, rng):
        h = random_field(space33, rng)
        sub = orthonormalize([h, 2.0 * h])
        assert sub.dim == 1
        assert_allclose(sub.vectors[0], h.values / norm(h), atol=1e-12)

    def test_random_five_fields_gram_identity(self, space33, rng):
        sub = orthonormalize(random_fields(space33, rng, 5))
        assert sub.dim == 5
        assert np.max(np.abs(sub.gram() - np.eye(5))) < 1e-10

    def test_all_zero_raises(self, space33):
        with pytest.raises(EmptyBasisError):
            orthonormalize([space33.zero_field(), space33.zero_field()])
        with pytest.raises(EmptyBasisError):
            orthonormalize([])

    def test_span_preserved(self, space17, rng):
        fields = random_fields(space17, rng, 3)
        sub = orthonormalize(fields)
        for f in fields:
            assert norm(project(f, sub) - f) < 1e-9 * max(1.0, norm(f))


class TestSubspace:
    def test_orthonormal_flag_validated(self, space17, rng):
        V = np.array([random_field(space17, rng).values for _ in range(2)])
        with pytest.raises(NotOrthonormalError):
            Subspace(space17, V, orthonormal=True)

    def test_empty_subspace_projects_to_zero(self, space17, rng):
        empty = Subspace(space17, np.empty((0, space17.n_nodes)), orthonormal=True)
        u = random_field(space17, rng)
        assert norm(project(u, empty)) == 0.0

    def test_coefficients_batch_matches_single(self, space17, rng):
        sub = orthonormalize(random_fields(space17, rng, 3))
        U = np.array([random_field(space17, rng).values for _ in range(4)])
        batch = sub.coefficients(U)
        for i in range(4):
            assert_allclose(batch[i], sub.coefficients(Field(space17, U[i])))


class TestPrincipalAngles:
    def test_same_subspace_zero_angles(self, space33, rng):
        a = orthonormalize(random_fields(space33, rng, 3))
        angles = principal_angles(a, a)
        assert np.max(angles) < 1e-7

    def test_orthogonal_directions(self, space33, rng):
        basis = orthonormalize(random_fields(space33, rng, 2))
        a = Subspace(space33, basis.vectors[:1], orthonormal=True)
        b = Subspace(space33, basis.vectors[1:], orthonormal=True)
        assert principal_angles(a, b)[0] == pytest.approx(np.pi / 2, abs=1e-8)


def test_pairwise_inner_matches_loop(space17, rng):
    U = np.array([random_field(space17, rng).values for _ in range(3)])
    V = np.array([random_field(space17, rng).values for _ in range(2)])
    got = pairwise_inner(space17, U, V)
    for i in range(3):
        for j in range(2):
            expected = inner_product(Field(space17, U[i]), Field(space17, V[j]))
            assert got[i, j] == pytest.approx(expected, rel=1e-13)
