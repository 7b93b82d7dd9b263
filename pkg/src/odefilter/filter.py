"""Preconditioned square-root EK0/EK1 ODE filter and smoother.

All states are stored in the original coordinates. Every step moves the
filter state into the step's preconditioned coordinates, where the
transition and process noise do not depend on the step size, predicts and
updates there with square-root operations, and moves the result back.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    FieldSingularityError,
    IndefiniteCovarianceError,
    InvalidInputError,
    MaxStepsError,
    MinimumStepError,
    NonFiniteStateError,
    OutOfRangeError,
    SingularInnovationError,
)
from .prior import IWPModel, KronIdentity, discretize_closed_form
from .sqrt_gaussian import SqrtGaussian, _is_singular, sqrt_predict, sqrt_smooth_step, sqrt_update, triangularize
from .taylor import initial_distribution


class Method(str, Enum):
    EK0 = "ek0"
    EK1 = "ek1"


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``fixed_step=None`` selects adaptive steps with proportional control;
    a positive float selects a fixed grid of that spacing (the last step is
    shortened to end exactly at ``t1``). ``precondition=False`` disables the
    coordinate change and exists only to demonstrate why it is needed.
    """

    method: Method = Method.EK1
    nu: int = 4
    abstol: float = 1e-6
    reltol: float = 1e-6
    first_step: float = 0.01
    fixed_step: Optional[float] = None
    max_steps: int = 10**7
    safety: float = 0.95
    step_factor_bounds: tuple = (0.2, 10.0)
    precondition: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if int(self.nu) != self.nu or not 1 <= self.nu <= 11:
            raise InvalidInputError(f"nu must be an integer in [1, 11], got {self.nu!r}")
        if not (self.abstol > 0 and self.reltol > 0):
            raise InvalidInputError("tolerances must be positive")
        if not self.first_step > 0:
            raise InvalidInputError("first_step must be positive")
        if self.fixed_step is not None and not (self.fixed_step > 0 and math.isfinite(self.fixed_step)):
            raise InvalidInputError("fixed_step must be positive and finite")
        if not 0 < self.safety < 1:
            raise InvalidInputError("safety must lie in (0, 1)")
        lo, hi = self.step_factor_bounds
        if not 0 < lo < 1 < hi:
            raise InvalidInputError("step_factor_bounds must satisfy 0 < lo < 1 < hi")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be positive")

    @property
    def adaptive(self):
        return self.fixed_step is None


@dataclass(frozen=True)
class StepInfo:
    """Passed to a solve monitor after every accepted step."""

    t: float
    h: float
    predicted_factor: np.ndarray
    precond: object
    diffusion: float


@dataclass(frozen=True)
class Solution:
    problem: object
    config: SolverConfig
    times: np.ndarray
    filtered: tuple
    local_diffusions: np.ndarray
    smoothed: Optional[tuple] = None
    n_field_evals: int = 0
    n_jacobian_evals: int = 0
    n_rejected: int = 0

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def step_sizes(self):
        return np.diff(self.times)

    @property
    def max_step(self):
        return float(self.step_sizes.max()) if self.n_steps else 0.0

    @property
    def dim(self):
        return self.problem.dim

    def means(self, derivative=0, smoothed=None):
        """Mean of one derivative block at every grid point, shape ``(N + 1, d)``."""
        states = self._states(smoothed)
        block = slice(derivative * self.dim, (derivative + 1) * self.dim)
        return np.array([s.mean[block] for s in states])

    def _states(self, smoothed):
        if smoothed is None:
            smoothed = self.smoothed is not None
        if smoothed and self.smoothed is None:
            raise ValueError("solution has not been smoothed")
        return self.smoothed if smoothed else self.filtered

    @property
    def final_value(self):
        return self.filtered[-1].mean[: self.dim]

    def __call__(self, ts):
        """Posterior means of the solution at arbitrary times (dense output)."""
        ts = np.asarray(ts, dtype=float)
        values = np.array([dense_output(self, t).mean[: self.dim] for t in np.atleast_1d(ts)])
        return values[0] if ts.ndim == 0 else values


class _CountingProblem:
    def __init__(self, problem):
        self.problem = problem
        self.dim = problem.dim
        self.n_field_evals = 0
        self.n_jacobian_evals = 0

    def f(self, x):
        self.n_field_evals += 1
        return self.problem.f(x)

    def jacobian(self, x):
        self.n_jacobian_evals += 1
        return self.problem.jacobian(x)


class _Discretization:
    """Transition operator, unit-diffusion noise factor and coordinate change for a step."""

    def __init__(self, model, precondition=True):
        self.model = model
        self.precondition = precondition

    def __call__(self, h):
        model = self.model
        if self.precondition:
            return model.transition, model.process_noise_factor, model.precond(h)
        A, Q = discretize_closed_form(model, h)
        try:
            chol = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteCovarianceError(
                f"process noise covariance for h={h} is not positive definite "
                f"without preconditioning: {exc}"
            ) from exc
        factor = np.sqrt(model.diffusion) * np.kron(chol, np.eye(model.dim))
        return KronIdentity(A, model.dim), factor, None


def _into(T, mean, factor):
    if T is None:
        return mean, factor
    return T.inverse(mean), T.inverse(factor)


def _out(T, mean, factor):
    if T is None:
        return mean, factor
    return T.apply(mean), T.apply(factor)


def linearize(method, problem, T, m_pred):
    """Linearised measurement ``(H, z)`` at a prediction in preconditioned coordinates.

    ``z = E1 T m - f(E0 T m)``; ``H = E1 T`` for EK0 and
    ``H = E1 T - J E0 T`` with the Jacobian ``J`` at ``E0 T m`` for EK1.
    ``T`` is a :class:`~odefilter.prior.Preconditioner` or ``None``.
    """
    method = Method(method)
    d = problem.dim
    n = m_pred.shape[0]
    if T is None:
        s0 = s1 = 1.0
    else:
        s0, s1 = T.scale[0], T.scale[1]
    x = s0 * m_pred[:d]
    fx = problem.f(x)
    z = s1 * m_pred[d : 2 * d] - fx
    H = np.zeros((d, n))
    H[:, d : 2 * d] = s1 * np.eye(d)
    if method is Method.EK1:
        J = problem.jacobian(x)
        if not np.isfinite(J).all():
            raise NonFiniteStateError("Jacobian is not finite at the predicted state")
        H[:, :d] = -s0 * J
    if not np.isfinite(z).all():
        raise NonFiniteStateError("vector field is not finite at the predicted state")
    return H, z


def calibrate_local_diffusion(z, S_factor):
    """Quasi-maximum-likelihood diffusion ``z^T S^{-1} z / d`` from ``S``'s lower factor."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    S_factor = np.atleast_2d(np.asarray(S_factor, dtype=float))
    if _is_singular(S_factor):
        raise SingularInnovationError(
            "innovation factor for calibration is singular", diagonal=np.diag(S_factor).tolist()
        )
    w = scipy.linalg.solve_triangular(S_factor, z, lower=True, check_finite=False)
    return float(w @ w) / z.shape[0]


def error_estimate(sigma2, S_diag, m_ref, abstol, reltol):
    """Weighted RMS of the local error estimates ``sqrt(sigma2 * S_ii)``."""
    local = np.sqrt(sigma2 * np.asarray(S_diag, dtype=float))
    scale = abstol + reltol * np.abs(np.asarray(m_ref, dtype=float))
    return float(np.sqrt(np.mean((local / scale) ** 2)))


def adapt_step(h, err, nu, config, min_step=0.0):
    """Proportional step-size control ``h * clamp(safety * err^(-1/(nu+1)))``."""
    lo, hi = config.step_factor_bounds
    if err == 0.0:
        factor = hi
    elif not math.isfinite(err):
        factor = lo
    else:
        factor = min(max(config.safety * err ** (-1.0 / (nu + 1)), lo), hi)
    h_next = h * factor
    if h_next < min_step:
        raise MinimumStepError(f"step size {h_next:.3e} fell below the minimum {min_step:.3e}")
    return h_next


@dataclass
class _Attempt:
    mean: np.ndarray
    factor: np.ndarray
    diffusion: float
    S_diag: np.ndarray
    predicted_factor: np.ndarray
    precond: object


def _attempt_step(counted, method, disc, mean, factor, h, t):
    A, L_Q, T = disc(h)
    mb, Lb = _into(T, mean, factor)
    m_pred = A @ mb
    H, z = linearize(method, counted, T, m_pred)
    HLQ = H @ L_Q
    if not np.isfinite(HLQ).all():
        raise NonFiniteStateError("measurement matrix is not finite")
    S_unit = triangularize(HLQ.T).T
    sigma2 = calibrate_local_diffusion(z, S_unit)
    if not math.isfinite(sigma2):
        raise NonFiniteStateError("local diffusion estimate is not finite")
    L_pred = sqrt_predict(A, Lb, math.sqrt(sigma2) * L_Q)
    if not np.any(z) and not np.any(L_pred):
        # Exact Dirac prediction that already solves the ODE at t + h.
        m_new, L_new = m_pred, L_pred
    else:
        m_new, L_new, _, _ = sqrt_update(H, m_pred, L_pred, z, t=t, h=h)
    m_new, L_new = _out(T, m_new, L_new)
    if not (np.isfinite(m_new).all() and np.isfinite(L_new).all()):
        raise NonFiniteStateError("updated state is not finite")
    return _Attempt(m_new, L_new, sigma2, np.sum(HLQ**2, axis=1), L_pred, T)


def solve(problem, config=None, *, initial=None, monitor: Optional[Callable] = None):
    """Run the forward filter pass.

    Parameters
    ----------
    problem : ODEProblem
    config : SolverConfig, optional
    initial : SqrtGaussian, optional
        Initial state; defaults to the exact taylor-mode derivative stack with
        zero covariance.
    monitor : callable, optional
        Called with a :class:`StepInfo` after every accepted step.

    Raises
    ------
    SolverError
        On step-size underflow, exhausted step budget, or a non-finite state
        in fixed-step mode. ``exc.partial`` holds the accepted steps.
    """
    config = config or SolverConfig()
    model = IWPModel(config.nu, problem.dim)
    disc = _Discretization(model, config.precondition)
    counted = _CountingProblem(problem)
    state = initial if initial is not None else initial_distribution(problem, config.nu)
    if state.dim != model.state_dim:
        raise InvalidInputError(f"initial state has dimension {state.dim}, expected {model.state_dim}")

    t0, t1 = float(problem.t0), float(problem.t1)
    d = problem.dim
    times, states, diffusions = [t0], [state], []
    n_rejected = 0

    def partial():
        return Solution(
            problem,
            config,
            np.array(times),
            tuple(states),
            np.array(diffusions),
            n_field_evals=counted.n_field_evals,
            n_jacobian_evals=counted.n_jacobian_evals,
            n_rejected=n_rejected,
        )

    def accept(t_new, h, result):
        times.append(t_new)
        states.append(SqrtGaussian(result.mean, result.factor))
        diffusions.append(result.diffusion)
        if monitor is not None:
            monitor(StepInfo(t_new, h, result.predicted_factor, result.precond, result.diffusion))

    rejectable = (NonFiniteStateError, FieldSingularityError, FloatingPointError, ZeroDivisionError, OverflowError)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        if not config.adaptive:
            n = max(int(math.ceil((t1 - t0) / config.fixed_step - 1e-9)), 1)
            if n > config.max_steps:
                raise MaxStepsError(f"fixed grid needs {n} steps > max_steps", partial())
            grid = t0 + config.fixed_step * np.arange(n + 1)
            grid[-1] = t1
            for k in range(n):
                h = grid[k + 1] - grid[k]
                try:
                    result = _attempt_step(counted, config.method, disc, states[-1].mean, states[-1].cov_factor, h, grid[k])
                except rejectable as exc:
                    raise NonFiniteStateError(f"step {k} at t={grid[k]:.6g}: {exc}", partial()) from exc
                except IndefiniteCovarianceError as exc:
                    exc.partial = partial()
                    raise
                accept(grid[k + 1], h, result)
            return partial()

        t = t0
        h = min(config.first_step, t1 - t0)
        min_step = 1e-14 * (t1 - t0)
        attempts = 0
        while t < t1:
            if attempts >= config.max_steps:
                raise MaxStepsError(f"exceeded max_steps={config.max_steps} at t={t:.6g}", partial())
            attempts += 1
            last = t + h >= t1
            if last:
                h = t1 - t
            current = states[-1]
            try:
                result = _attempt_step(counted, config.method, disc, current.mean, current.cov_factor, h, t)
                m_ref = np.maximum(np.abs(current.mean[:d]), np.abs(result.mean[:d]))
                err = error_estimate(result.diffusion, result.S_diag, m_ref, config.abstol, config.reltol)
            except rejectable:
                result, err = None, math.inf
            except IndefiniteCovarianceError as exc:
                exc.partial = partial()
                raise
            if not math.isfinite(err):
                err = math.inf
            if err <= 1.0:
                t = t1 if last else t + h
                accept(t, h, result)
            else:
                n_rejected += 1
            try:
                h = adapt_step(h, err, config.nu, config, min_step=min_step)
            except MinimumStepError as exc:
                raise MinimumStepError(f"{exc} at t={t:.6g}", partial()) from None
    return partial()


def smooth(solution):
    """Backward square-root smoothing pass; returns a new :class:`Solution`."""
    model = IWPModel(solution.config.nu, solution.dim)
    disc = _Discretization(model, solution.config.precondition)
    filtered = solution.filtered
    smoothed = [None] * len(filtered)
    smoothed[-1] = filtered[-1]
    with np.errstate(over="ignore", under="ignore"):
        for n in range(solution.n_steps - 1, -1, -1):
            h = solution.times[n + 1] - solution.times[n]
            A, L_Q, T = disc(h)
            if not np.any(filtered[n].cov_factor):
                # Later data cannot move a Dirac filtering marginal.
                smoothed[n] = filtered[n]
                continue
            mF, LF = _into(T, filtered[n].mean, filtered[n].cov_factor)
            mS, LS = _into(T, smoothed[n + 1].mean, smoothed[n + 1].cov_factor)
            noise = math.sqrt(solution.local_diffusions[n]) * L_Q
            m, L, _ = sqrt_smooth_step(mF, LF, mS, LS, A, noise)
            smoothed[n] = SqrtGaussian(*_out(T, m, L))
    return replace(solution, smoothed=tuple(smoothed))


def dense_output(solution, t):
    """Posterior over the full state at time ``t`` without evaluating the field.

    Predicts from the filtered state at the left grid point and conditions the
    prediction on the smoothed state at the right grid point.
    """
    if solution.smoothed is None:
        raise ValueError("dense output requires a smoothed solution")
    times = solution.times
    t = float(t)
    if not times[0] <= t <= times[-1]:
        raise OutOfRangeError(f"t={t} outside the solved interval [{times[0]}, {times[-1]}]")
    n = int(np.searchsorted(times, t, side="right")) - 1
    if times[n] == t:
        return solution.smoothed[n]

    model = IWPModel(solution.config.nu, solution.dim)
    disc = _Discretization(model, solution.config.precondition)
    sigma = math.sqrt(solution.local_diffusions[n])
    start = solution.filtered[n]

    A1, LQ1, T1 = disc(t - times[n])
    mb, Lb = _into(T1, start.mean, start.cov_factor)
    m_pred = A1 @ mb
    L_pred = sqrt_predict(A1, Lb, sigma * LQ1)
    m_t, L_t = _out(T1, m_pred, L_pred)

    if not np.any(L_t):
        return SqrtGaussian(m_t, L_t)

    A2, LQ2, T2 = disc(times[n + 1] - t)
    mF, LF = _into(T2, m_t, L_t)
    right = solution.smoothed[n + 1]
    mS, LS = _into(T2, right.mean, right.cov_factor)
    m, L, _ = sqrt_smooth_step(mF, LF, mS, LS, A2, sigma * LQ2)
    return SqrtGaussian(*_out(T2, m, L))
