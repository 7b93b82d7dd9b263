from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from odefilter.errors import DiscretizationOverflowError, InvalidInputError, InvalidStepError
from odefilter.prior import (
    IWPModel,
    KronIdentity,
    ahat,
    discretize_closed_form,
    iwp_drift_and_dispersion,
    mfd_discretize,
    precond,
    qhat,
)

# published (log10 cond, log10 rho, log10 min eigenvalue) of qhat, one decimal
PROPOSED_TABLE = {
    1: (1.3, 0.5, -1.2),
    3: (4.2, 0.8, -4.0),
    5: (7.2, 1.0, -7.0),
    7: (10.2, 1.2, -10.0),
    9: (13.2, 1.3, -13.0),
    11: (16.2, 1.4, -16.0),
}


def test_ahat_small_orders():
    np.testing.assert_array_equal(ahat(1), [[1, 1], [0, 1]])
    np.testing.assert_array_equal(ahat(2), [[1, 2, 1], [0, 1, 1], [0, 0, 1]])


@pytest.mark.parametrize("nu", range(1, 12))
def test_ahat_is_unit_upper_triangular_binomial(nu):
    A = ahat(nu)
    assert np.all(np.diag(A) == 1.0)
    assert np.all(np.tril(A, -1) == 0.0)
    for i in range(nu + 1):
        for j in range(i, nu + 1):
            assert A[i, j] == comb(nu - i, nu - j)


def test_qhat_nu1():
    np.testing.assert_allclose(qhat(1), [[1 / 3, 1 / 2], [1 / 2, 1]], rtol=1e-15)


@pytest.mark.parametrize("nu", range(1, 12))
def test_qhat_symmetric_hankel_with_unit_corner(nu):
    Q = qhat(nu)
    assert Q[nu, nu] == 1.0
    assert np.array_equal(Q, Q.T)
    np.linalg.cholesky(Q)


@pytest.mark.parametrize("order_fn", [ahat, qhat])
def test_closed_forms_take_no_step(order_fn):
    assert np.array_equal(order_fn(6), order_fn(6))


@pytest.mark.parametrize("nu", [0, -1, 2.5])
def test_invalid_orders(nu):
    with pytest.raises(InvalidInputError):
        qhat(nu)


@pytest.mark.parametrize("nu, expected", sorted(PROPOSED_TABLE.items()))
def test_qhat_conditioning(nu, expected):
    Q = qhat(nu)
    got = (np.log10(np.linalg.cond(Q)), np.log10(Q.max() / Q.min()), np.log10(np.linalg.eigvalsh(Q).min()))
    assert np.allclose(np.round(got, 1), expected, atol=0.1 + 1e-9)


class TestPrecond:
    def test_examples(self):
        np.testing.assert_allclose(precond(1, 0.01).scale, [0.001, 0.1], rtol=1e-14)
        np.testing.assert_allclose(precond(0, 1.0).scale, [1.0])
        np.testing.assert_allclose(precond(2, 1.0).scale, [0.5, 1.0, 1.0])

    @pytest.mark.parametrize("h", [0.0, -1.0, np.nan, np.inf])
    def test_invalid_step(self, h):
        with pytest.raises(InvalidStepError):
            precond(3, h)

    @given(st.integers(1, 11), st.floats(1e-10, 10.0), st.integers(1, 4))
    def test_round_trip(self, nu, h, d):
        T = precond(nu, h)
        assert np.all(T.scale > 0)
        x = np.arange(1.0, d * (nu + 1) + 1.0)
        np.testing.assert_allclose(T.inverse(T.apply(x)), x, rtol=1e-15)
        X = np.outer(x, x[: d + 1])
        np.testing.assert_allclose(T.apply(T.inverse(X)), X, rtol=1e-15)

    def test_applies_per_derivative_block(self):
        T = precond(2, 0.5)
        x = np.ones(6)
        np.testing.assert_allclose(T.apply(x), np.repeat(T.scale, 2))


def _close_where_representable(actual, expected, rtol):
    mask = (np.abs(expected) > 1e-300) & np.isfinite(expected)
    np.testing.assert_allclose(actual[mask], expected[mask], rtol=rtol)


@pytest.mark.parametrize("nu", range(1, 9))
@pytest.mark.parametrize("h", [1e-8, 1e-4, 1e-2, 1.0, 10.0])
def test_preconditioner_factorises_closed_form(nu, h):
    A, Q = discretize_closed_form(nu, h)
    s = precond(nu, h).scale
    _close_where_representable(s[:, None] * ahat(nu) / s[None, :], A, 1e-12)
    _close_where_representable(s[:, None] * qhat(nu) * s[None, :], Q, 1e-12)


class TestClosedForm:
    def test_nu1(self):
        h = 0.3
        A, Q = discretize_closed_form(1, h)
        np.testing.assert_allclose(A, [[1, h], [0, 1]])
        np.testing.assert_allclose(Q, [[h**3 / 3, h**2 / 2], [h**2 / 2, h]], rtol=1e-15)

    @pytest.mark.parametrize("nu", [1, 2, 4])
    def test_unit_step_is_qhat_over_factorials(self, nu):
        _, Q = discretize_closed_form(nu, 1.0)
        f = np.array([factorial(nu - i) for i in range(nu + 1)], dtype=float)
        np.testing.assert_allclose(Q, qhat(nu) / np.outer(f, f), rtol=1e-15)

    def test_unpreconditioned_condition_number(self):
        _, Q = discretize_closed_form(1, 1e-4)
        assert round(np.log10(np.linalg.cond(Q)), 1) == 9.1

    def test_accepts_model(self):
        A, _ = discretize_closed_form(IWPModel(3, 2), 0.1)
        assert A.shape == (4, 4)

    def test_overflow(self):
        with pytest.raises(DiscretizationOverflowError):
            discretize_closed_form(11, 1e20)


class TestMatrixFraction:
    def test_no_drift(self):
        A, Q = mfd_discretize(np.zeros((2, 2)), np.eye(2), 1.0)
        np.testing.assert_allclose(A, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(Q, np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("nu, h, tol", [(1, 0.7, 1e-12), (2, 0.5, 1e-10), (5, 0.1, 1e-10)])
    def test_matches_closed_form(self, nu, h, tol):
        F, L = iwp_drift_and_dispersion(nu)
        A_mfd, Q_mfd = mfd_discretize(F, L, h)
        A, Q = discretize_closed_form(nu, h)
        np.testing.assert_allclose(A_mfd, A, rtol=tol, atol=1e-15)
        np.testing.assert_allclose(Q_mfd, Q, rtol=tol, atol=1e-15)

    def test_overflow(self):
        with pytest.raises(DiscretizationOverflowError):
            mfd_discretize(np.array([[800.0]]), np.array([[1.0]]), 1.0)


class TestModel:
    @pytest.mark.parametrize("kwargs", [dict(nu=0, dim=1), dict(nu=2, dim=0), dict(nu=2, dim=1, diffusion=-1.0)])
    def test_validation(self, kwargs):
        with pytest.raises(InvalidInputError):
            IWPModel(**kwargs)

    def test_state_dim_and_projection(self):
        model = IWPModel(3, 2)
        assert model.state_dim == 8
        assert model.projection(1) == slice(2, 4)

    def test_noise_factor_scales_with_sqrt_diffusion(self):
        base = IWPModel(2, 3).process_noise_factor
        np.testing.assert_allclose(IWPModel(2, 3, diffusion=4.0).process_noise_factor, 2.0 * base)
        np.testing.assert_allclose(base @ base.T, np.kron(qhat(2), np.eye(3)), atol=1e-15)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_kron_identity_matches_dense_kron(nu, d, seed):
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((nu + 1, nu + 1))
    op = KronIdentity(left, d)
    X = rng.standard_normal((d * (nu + 1), 3))
    np.testing.assert_allclose(op @ X, np.kron(left, np.eye(d)) @ X, atol=1e-12)
    np.testing.assert_allclose(op @ X[:, 0], op.todense() @ X[:, 0], atol=1e-12)
