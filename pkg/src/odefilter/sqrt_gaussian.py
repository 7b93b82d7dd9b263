"""Square-root Gaussian algebra.

Covariances are only ever handled through matrix square-roots ``L`` with
``C = L @ L.T``. Predictions, measurement updates and smoothing steps are
computed with QR decompositions of stacked factors, so the implied
covariances stay symmetric positive semidefinite in finite precision.

Linear maps ``A`` may be dense arrays or any object implementing ``A @ X``
(for example :class:`odefilter.prior.KronIdentity`).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, SingularInnovationError, SingularPredictionError

# Relative size of the smallest diagonal entry of a triangular factor
# below which it is treated as singular.
SINGULAR_RTOL = 1e-14


@dataclass(frozen=True)
class SqrtGaussian:
    """Gaussian ``N(mean, cov_factor @ cov_factor.T)``."""

    mean: np.ndarray
    cov_factor: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        factor = np.asarray(self.cov_factor, dtype=float)
        if mean.ndim != 1:
            raise InvalidInputError(f"mean must be a vector, got shape {mean.shape}")
        if factor.shape != (mean.shape[0], mean.shape[0]):
            raise InvalidInputError(
                f"cov_factor shape {factor.shape} does not match mean of size {mean.shape[0]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_factor", factor)

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        return self.cov_factor @ self.cov_factor.T

    @classmethod
    def dirac(cls, mean):
        mean = np.asarray(mean, dtype=float)
        return cls(mean, np.zeros((mean.shape[0], mean.shape[0])))


@lru_cache(maxsize=None)
def _strict_lower(n):
    return np.tril(np.ones((n, n), dtype=bool), -1)


def triangularize(stacked):
    """Upper-triangular ``R`` with ``R.T @ R == stacked.T @ stacked``.

    The orthogonal factor of the QR decomposition is discarded and the rows of
    ``R`` are sign-flipped so that its diagonal is nonnegative.
    """
    stacked = np.asarray(stacked, dtype=float)
    if stacked.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got shape {stacked.shape}")
    m, n = stacked.shape
    if m < n:
        raise InvalidInputError(f"need at least as many rows as columns, got {m}x{n}")
    if not np.isfinite(stacked).all():
        raise InvalidInputError("stacked matrix contains non-finite entries")
    r = scipy.linalg.lapack.dgeqrf(stacked)[0][:n]
    r[_strict_lower(n)] = 0.0
    negative = r.diagonal() < 0.0
    if negative.any():
        r[negative] *= -1.0
    return r


def _check_square(name, matrix, n):
    if matrix.shape != (n, n):
        raise InvalidInputError(f"{name} must have shape {(n, n)}, got {matrix.shape}")


def _is_singular(lower, rtol=SINGULAR_RTOL):
    diag = np.abs(np.diag(lower))
    largest = diag.max(initial=0.0)
    return largest == 0.0 or diag.min() <= rtol * largest


def sqrt_predict(A, L_C, L_Q):
    """Lower-triangular factor of ``A C A^T + Q`` from the factors of C and Q.

    The sum is never formed; the stacked matrix ``[(A L_C)^T; L_Q^T]`` is
    triangularized instead.
    """
    L_C = np.asarray(L_C, dtype=float)
    L_Q = np.asarray(L_Q, dtype=float)
    n = L_C.shape[0]
    _check_square("L_C", L_C, n)
    try:
        AL = A @ L_C
    except ValueError as exc:
        raise InvalidInputError(f"A does not act on factors of size {n}: {exc}") from None
    if AL.shape != (n, n) or L_Q.shape[0] != n:
        raise InvalidInputError(
            f"incompatible shapes: A @ L_C is {AL.shape}, L_Q is {L_Q.shape}"
        )
    return triangularize(np.concatenate([AL.T, L_Q.T], axis=0)).T


def _gain(L_num, M, lower):
    """``L_num @ M.T @ (lower @ lower.T)^{-1}`` without forming a Gram product.

    ``W = lower^{-1} M`` has spectral norm at most one whenever ``lower`` factors
    ``M M^T + (psd)``, so no intermediate is larger than the factors involved.
    Squaring strongly graded factors would overflow for tiny steps at high order.
    """
    W = scipy.linalg.solve_triangular(lower, M, lower=True, check_finite=False)
    return scipy.linalg.solve_triangular(lower.T, W @ L_num.T, lower=False, check_finite=False).T


def sqrt_update(H, m_pred, L_pred, z, **context):
    """Condition a square-root Gaussian on the linearised Dirac measurement.

    Parameters
    ----------
    H : ndarray, shape (d, n)
        Measurement matrix.
    m_pred, L_pred : ndarray
        Predicted mean and covariance factor.
    z : ndarray, shape (d,)
        Measurement residual at ``m_pred``.
    **context
        Extra information attached to a :class:`SingularInnovationError`.

    Returns
    -------
    m_new, L_new : ndarray
        Posterior mean and (non-triangular) covariance factor.
    S_factor : ndarray, shape (d, d)
        Lower-triangular factor of the innovation covariance ``H C H^T``.
    K : ndarray, shape (n, d)
        Kalman gain.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m_pred = np.asarray(m_pred, dtype=float)
    L_pred = np.asarray(L_pred, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = m_pred.shape[0]
    _check_square("L_pred", L_pred, n)
    if H.shape != (z.shape[0], n):
        raise InvalidInputError(f"H has shape {H.shape}, expected {(z.shape[0], n)}")

    HL = H @ L_pred
    S_factor = triangularize(HL.T).T
    if _is_singular(S_factor):
        raise SingularInnovationError(
            "innovation covariance factor is numerically singular",
            diagonal=np.diag(S_factor).tolist(),
            **context,
        )
    K = _gain(L_pred, HL, S_factor)
    m_new = m_pred - K @ z
    L_new = L_pred - K @ HL
    return m_new, L_new, S_factor, K


def sqrt_smooth_step(m_F, L_F, m_next_S, L_next_S, A, L_Q):
    """One backward (Rauch-Tung-Striebel) step in square-root form.

    The prediction from the filtering distribution is recomputed, and the
    smoothed covariance factor comes from a Joseph-form stack
    ``[(I - G A) L_F, G L_Q, G L_next_S]``.

    Returns
    -------
    m_S, L_S, G : ndarray
        Smoothed mean, lower-triangular smoothed covariance factor and
        smoothing gain.
    """
    m_F = np.asarray(m_F, dtype=float)
    L_F = np.asarray(L_F, dtype=float)
    m_next_S = np.asarray(m_next_S, dtype=float)
    L_next_S = np.asarray(L_next_S, dtype=float)
    L_Q = np.asarray(L_Q, dtype=float)
    n = m_F.shape[0]
    for name, matrix in (("L_F", L_F), ("L_next_S", L_next_S)):
        _check_square(name, matrix, n)

    m_pred = A @ m_F
    AL = A @ L_F
    L_pred = sqrt_predict(A, L_F, L_Q)
    # Predicted factors are strongly graded across derivative blocks, and
    # triangular solves with them stay accurate; only exact zeros are fatal.
    if _is_singular(L_pred, rtol=0.0):
        raise SingularPredictionError(
            "predicted covariance factor is numerically singular",
            diagonal=np.diag(L_pred).tolist(),
        )
    G = _gain(L_F, AL, L_pred)
    m_S = m_F + G @ (m_next_S - m_pred)
    stacked = np.concatenate([(L_F - G @ AL).T, (G @ L_Q).T, (G @ L_next_S).T], axis=0)
    L_S = triangularize(stacked).T
    return m_S, L_S, G
