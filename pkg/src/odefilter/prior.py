"""Integrated Wiener process prior and its step-size-free coordinates.

State vectors use a derivative-major layout: for an ODE of dimension ``d``
the state of length ``d * (nu + 1)`` is ``(x, x', ..., x^(nu))`` with every
block holding all ``d`` coordinates. Matrices of the form ``X kron I_d`` are
represented by their ``(nu + 1) x (nu + 1)`` left factor only.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb, factorial

import numpy as np
import scipy.linalg

from .errors import DiscretizationOverflowError, InvalidInputError, InvalidStepError


def _check_order(nu, minimum=1):
    if int(nu) != nu or nu < minimum:
        raise InvalidInputError(f"order must be an integer >= {minimum}, got {nu!r}")
    return int(nu)


def _check_step(h):
    h = float(h)
    if not np.isfinite(h) or h <= 0.0:
        raise InvalidStepError(f"step size must be positive and finite, got {h!r}")
    return h


def ahat(nu):
    """Step-size-free transition matrix with entries ``binom(nu - i, nu - j)``."""
    nu = _check_order(nu)
    n = nu + 1
    return np.array([[float(comb(nu - i, nu - j)) for j in range(n)] for i in range(n)])


def qhat(nu):
    """Step-size-free process noise, the Hankel matrix ``1 / (2 nu + 1 - i - j)``."""
    nu = _check_order(nu)
    idx = np.arange(nu + 1)
    return 1.0 / (2.0 * nu + 1.0 - idx[:, None] - idx[None, :])


class KronIdentity:
    """The matrix ``left kron I_d`` acting on derivative-major vectors and matrices.

    Supports ``op @ x`` for arrays whose leading axis has length
    ``left.shape[1] * d``; the Kronecker product itself is never built.
    """

    def __init__(self, left, d):
        self.left = np.asarray(left, dtype=float)
        self.d = int(d)
        self.shape = (self.left.shape[0] * self.d, self.left.shape[1] * self.d)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        blocks = x.reshape(self.left.shape[1], self.d, *x.shape[1:])
        out = np.tensordot(self.left, blocks, axes=(1, 0))
        return out.reshape(self.shape[0], *x.shape[1:])

    def todense(self):
        return np.kron(self.left, np.eye(self.d))


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal coordinate change ``T = sqrt(h) diag(h^nu / nu!, ..., h, 1)``.

    ``scale`` holds the diagonal of the ``(nu + 1)``-sized left factor. The
    ``apply``/``inverse`` methods act on derivative-major vectors or matrices
    (rows) of any spatial dimension ``d``.
    """

    scale: np.ndarray
    step: float

    @property
    def nu(self):
        return self.scale.shape[0] - 1

    def expanded(self, d):
        return np.repeat(self.scale, d)

    def _rows(self, x, factor):
        x = np.asarray(x, dtype=float)
        d = x.shape[0] // self.scale.shape[0]
        s = np.repeat(factor, d)
        return s.reshape(-1, *([1] * (x.ndim - 1))) * x

    def apply(self, x):
        return self._rows(x, self.scale)

    def inverse(self, x):
        return self._rows(x, 1.0 / self.scale)


@lru_cache(maxsize=None)
def _precond_table(nu):
    powers = np.arange(nu, -1, -1, dtype=float)
    return powers, np.array([float(factorial(p)) for p in range(nu, -1, -1)])


def precond(nu, h):
    nu = _check_order(nu, minimum=0)
    h = _check_step(h)
    powers, factorials = _precond_table(nu)
    with np.errstate(over="ignore", under="ignore"):
        scale = math.sqrt(h) * h**powers / factorials
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0.0):
        raise InvalidStepError(f"preconditioner for nu={nu}, h={h} is not representable")
    return Preconditioner(scale=scale, step=h)


@dataclass(frozen=True)
class IWPModel:
    """``nu``-times integrated Wiener process prior for a ``dim``-dimensional ODE."""

    nu: int
    dim: int
    diffusion: float = 1.0

    def __post_init__(self):
        _check_order(self.nu)
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dimension must be a positive integer, got {self.dim!r}")
        if not np.isfinite(self.diffusion) or self.diffusion <= 0.0:
            raise InvalidInputError(f"diffusion must be positive, got {self.diffusion!r}")

    @property
    def state_dim(self):
        return self.dim * (self.nu + 1)

    @cached_property
    def transition(self):
        """``ahat(nu) kron I_d`` as an operator."""
        return KronIdentity(ahat(self.nu), self.dim)

    @cached_property
    def qhat_cholesky(self):
        return np.linalg.cholesky(qhat(self.nu))

    @cached_property
    def process_noise_factor(self):
        """Dense factor of ``qhat kron (diffusion I_d)``, the QR input for predictions."""
        return np.sqrt(self.diffusion) * np.kron(self.qhat_cholesky, np.eye(self.dim))

    def precond(self, h):
        return precond(self.nu, h)

    def projection(self, i):
        """Indices of derivative block ``i`` in a state vector."""
        return slice(i * self.dim, (i + 1) * self.dim)


def discretize_closed_form(model, h):
    """Left Kronecker factors ``(A, Q)`` of the IWP transition over a step ``h``.

    ``model`` may be an :class:`IWPModel` or the order ``nu``. ``Q`` excludes
    the diffusion, which multiplies the right Kronecker factor.
    """
    nu = model.nu if isinstance(model, IWPModel) else _check_order(model)
    h = _check_step(h)
    n = nu + 1
    A = np.zeros((n, n))
    Q = np.empty((n, n))
    try:
        for i in range(n):
            for j in range(i, n):
                A[i, j] = h ** (j - i) / factorial(j - i)
            for j in range(n):
                p = 2 * nu + 1 - i - j
                Q[i, j] = h**p / (p * factorial(nu - i) * factorial(nu - j))
    except OverflowError:
        raise DiscretizationOverflowError(f"discretisation overflowed for nu={nu}, h={h}") from None
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Q))):
        raise DiscretizationOverflowError(f"discretisation overflowed for nu={nu}, h={h}")
    return A, Q


def iwp_drift_and_dispersion(nu):
    """Drift ``F`` (shift matrix) and dispersion ``L = e_nu`` of the 1-d IWP(nu)."""
    nu = _check_order(nu)
    F = np.diag(np.ones(nu), k=1)
    L = np.zeros((nu + 1, 1))
    L[-1, 0] = 1.0
    return F, L


def mfd_discretize(F, L, h):
    """Discretise ``dx = F x dt + L dw`` over ``h`` with Van Loan's block exponential.

    Used as an independent check of :func:`discretize_closed_form`.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    L = np.asarray(L, dtype=float).reshape(F.shape[0], -1)
    h = _check_step(h)
    n = F.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = F
    block[:n, n:] = L @ L.T
    block[n:, n:] = -F.T
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(block * h)
        A = E[:n, :n]
        Q = E[:n, n:] @ A.T
    Q = 0.5 * (Q + Q.T)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Q))):
        raise DiscretizationOverflowError(f"matrix-fraction discretisation overflowed for h={h}")
    return A, Q
