import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eu_kit import (
    DimensionError, Dimensions, DomainError, ExpectedUtility, RestrictedUtility, VnmOracle, builtin_family,
    densify, fd_oracle, make_weights,
)
from eu_kit.assembly import diagonal_embedding
from eu_kit.core import central_gradient, central_hessian, log_uniform_points

from conftest import FAMILIES, assemble

HALF = make_weights([0.5, 0.5])


def log_eu(weights=HALF, C=1):
    return ExpectedUtility(builtin_family("log-additive", (), C), weights, Dimensions(C, len(weights)))


def test_value_examples():
    assert log_eu().value([1.0, 1.0, 1.0]) == 0.0
    eu = log_eu(make_weights([0.25, 0.75]))
    assert eu.value([1.0, np.e, np.e**2]) == pytest.approx(1.75, rel=1e-15)
    crra = ExpectedUtility(builtin_family("crra", (2.0,), 1), HALF, Dimensions(1, 2))
    assert crra.value([1.0, 1.0, 1.0]) == pytest.approx(-2.0)


def test_gradient_examples():
    np.testing.assert_allclose(log_eu().gradient([1.0, 1.0, 1.0]), [1.0, 0.5, 0.5])
    np.testing.assert_allclose(log_eu().gradient([2.0, 1.0, 4.0]), [0.5, 0.5, 0.125])


def test_linear_gradient_layout():
    w = make_weights([0.2, 0.3, 0.5])
    eu = ExpectedUtility(builtin_family("linear", (), 2), w, Dimensions(2, 3))
    g = eu.gradient(np.full(8, 3.0))
    np.testing.assert_allclose(g, [1, 1, 0.2, 0.2, 0.3, 0.3, 0.5, 0.5])


def test_log_of_sum_hessian_blocks():
    eu = ExpectedUtility(builtin_family("log-of-sum", (), 1), HALF, Dimensions(1, 2))
    h = eu.hessian([1.0, 1.0, 1.0])
    np.testing.assert_allclose(h.corner, [[-0.25]])
    np.testing.assert_allclose(h.arms, [[[-0.125]], [[-0.125]]])
    np.testing.assert_allclose(h.diagonals, [[[-0.125]], [[-0.125]]])


def test_constant_hessian_quadratic():
    C = 2

    def value(X):
        return 10.0 - 0.5 * (X**2).sum(axis=1)

    u = VnmOracle(C, value, lambda X: -X, lambda X: np.broadcast_to(-np.eye(2 * C), (len(X), 2 * C, 2 * C)).copy())
    w = make_weights([0.2, 0.8])
    h = ExpectedUtility(u, w, Dimensions(C, 2)).hessian(np.ones(6))
    np.testing.assert_allclose(h.corner, -np.eye(C), atol=1e-15)
    np.testing.assert_array_equal(h.arms, 0.0)
    np.testing.assert_allclose(h.diagonals[0], -0.2 * np.eye(C))
    np.testing.assert_allclose(h.diagonals[1], -0.8 * np.eye(C))


def test_mismatched_weights_and_dims():
    with pytest.raises(DimensionError):
        ExpectedUtility(builtin_family("linear", (), 1), HALF, Dimensions(1, 3))
    with pytest.raises(DimensionError):
        ExpectedUtility(builtin_family("linear", (), 2), HALF, Dimensions(1, 2))


def test_value_rejects_boundary_points():
    with pytest.raises(DomainError):
        log_eu().value([1.0, 0.0, 1.0])


@pytest.mark.parametrize("name", FAMILIES)
def test_densified_hessian_matches_fd(name):
    _, U = assemble(name, 2, 3)
    X = log_uniform_points(np.random.default_rng(3), 10, U.ndim, 0.5, 2.0)
    for x in X:
        np.testing.assert_allclose(densify(U.hessian(x)), central_hessian(U.value, x[None])[0], atol=1e-4)


def test_batch_and_single_agree():
    _, U = assemble("crra", 2, 2)
    X = log_uniform_points(np.random.default_rng(4), 5, U.ndim)
    np.testing.assert_array_equal(U.value(X)[2], U.value(X[2]))
    np.testing.assert_array_equal(U.gradient(X)[2], U.gradient(X[2]))
    np.testing.assert_array_equal(U.dense_hessian(X)[2], densify(U.hessian(X[2])))


def test_restrict_value_examples():
    w = make_weights([0.2, 0.3, 0.5])
    U = ExpectedUtility(builtin_family("crra", (2.0,), 1), w, Dimensions(1, 3))
    R = RestrictedUtility(U, Dimensions(1, 3))
    assert R.value([2.0, 4.0]) == pytest.approx(-0.75, rel=1e-15)


class _Poly:
    """A non-separable smooth G-dimensional test function."""

    ndim = 4

    def value(self, X):
        X = np.atleast_2d(X)
        return X[:, 0] * X[:, 1] + X[:, 2] ** 2 * X[:, 3] + np.log(X).sum(axis=1)

    def gradient(self, X):
        X = np.atleast_2d(X)
        return central_gradient(self.value, X, 1e-6, relative=True)

    def hessian(self, X):
        X = np.atleast_2d(X)
        return central_hessian(self.value, X, 1e-5, 1e-4, relative=True)


def test_restriction_of_arbitrary_source():
    dims = Dimensions(1, 3)
    src = _Poly()
    R = RestrictedUtility(src, dims)
    assert R.value([1.0, 2.0]) == pytest.approx(src.value(np.array([1.0, 2.0, 2.0, 2.0]))[0])
    x = np.array([[1.3, 0.7]])
    np.testing.assert_allclose(R.gradient(x), central_gradient(R.value, x, 1e-6, relative=True), rtol=1e-6)
    np.testing.assert_allclose(R.hessian(x), central_hessian(R.value, x, 1e-5, 1e-4, relative=True),
                               rtol=1e-3, atol=1e-4)


def test_restriction_of_constant_has_zero_gradient():
    class Const:
        ndim = 3

        def value(self, X):
            return np.full(len(np.atleast_2d(X)), 4.0)

        def gradient(self, X):
            return np.zeros_like(np.atleast_2d(X))

        def hessian(self, X):
            X = np.atleast_2d(X)
            return np.zeros((len(X), 3, 3))

    R = RestrictedUtility(Const(), Dimensions(1, 2))
    np.testing.assert_array_equal(R.gradient([1.0, 2.0]), [0.0, 0.0])


@given(st.sampled_from(FAMILIES), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_restriction_recovers_u(name, C, S, seed):
    u, U = assemble(name, C, S)
    R = RestrictedUtility(U, Dimensions(C, S))
    X = log_uniform_points(np.random.default_rng(seed), 8, 2 * C)
    np.testing.assert_allclose(R.value(X), u.value(X), rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(R.gradient(X), u.gradient(X), rtol=1e-10)
    Hu = u.hessian(X)
    err = np.abs(R.hessian(X) - Hu).max(axis=(1, 2))
    assert np.all(err <= 1e-10 * np.abs(Hu).max(axis=(1, 2)) + 1e-300)


def test_diagonal_embedding_layout():
    E = diagonal_embedding(np.array([[1.0, 2.0, 3.0, 4.0]]), Dimensions(2, 3))
    assert E.tolist() == [[1, 2, 3, 4, 3, 4, 3, 4]]


def test_fd_oracle_examples():
    sq = fd_oracle(lambda X: X[:, 0] ** 2)
    assert sq.gradient([3.0, 1.0])[0] == pytest.approx(6.0, abs=1e-8)
    lg = fd_oracle(lambda X: np.log(X).sum(axis=1))
    np.testing.assert_allclose(lg.gradient([1.0, 1.0]), [1.0, 1.0], rtol=1e-9)
    with pytest.raises(DomainError):
        lg.gradient([1e-6, 1.0])
