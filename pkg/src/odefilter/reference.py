"""Classical reference solutions and error metrics."""

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidInputError, ReferenceSolveError


class ReferenceSolution:
    """Dense Dormand-Prince 5(4) solution, callable on arrays of times."""

    def __init__(self, problem, dense, n_steps, n_field_evals):
        self.problem = problem
        self.t0 = problem.t0
        self.t1 = problem.t1
        self._dense = dense
        self.n_steps = n_steps
        self.n_field_evals = n_field_evals

    def __call__(self, ts):
        ts = np.asarray(ts, dtype=float)
        values = self._dense(np.atleast_1d(ts)).T
        return values[0] if ts.ndim == 0 else values

    @property
    def final_value(self):
        return self(self.t1)


def rk_reference_solve(problem, abstol=1e-12, reltol=1e-12):
    """Solve ``problem`` with an embedded Dormand-Prince 5(4) pair.

    The 4th-order continuous extension gives dense output. Deterministic for
    fixed inputs.
    """
    if abstol < 1e-13 or reltol < 1e-13:
        raise InvalidInputError("reference tolerances must be >= 1e-13")
    try:
        result = solve_ivp(
            lambda t, x: problem.f(x),
            (problem.t0, problem.t1),
            problem.x0,
            method="RK45",
            atol=abstol,
            rtol=reltol,
            dense_output=True,
        )
    except Exception as exc:
        raise ReferenceSolveError(f"reference solve of {problem.name} failed: {exc}") from exc
    if not result.success:
        raise ReferenceSolveError(f"reference solve of {problem.name} failed: {result.message}")
    return ReferenceSolution(problem, result.sol, len(result.t) - 1, result.nfev)


def equidistant_grid(t0, t1, grid_h):
    n = max(int(round((t1 - t0) / grid_h)), 1)
    return np.linspace(t0, t1, n + 1)


def rmse_on_grid(candidate, reference, grid_h=1e-2, interval=None):
    """Root-mean-square error over an equidistant grid and all coordinates.

    ``candidate`` and ``reference`` map an array of times to an array of
    shape ``(len(times), d)``. The interval defaults to the reference's.
    """
    t0, t1 = interval if interval is not None else (reference.t0, reference.t1)
    ts = equidistant_grid(t0, t1, grid_h)
    diff = np.asarray(candidate(ts)) - np.asarray(reference(ts))
    return float(np.sqrt(np.mean(diff**2)))


def final_time_error(candidate, reference):
    """Euclidean error of the solution value at the final time.

    ``candidate`` is a :class:`~odefilter.filter.Solution` or a plain vector;
    ``reference`` a :class:`ReferenceSolution` or a plain vector.
    """
    final = getattr(candidate, "final_value", candidate)
    expected = getattr(reference, "final_value", reference)
    return float(np.linalg.norm(np.asarray(final, dtype=float) - np.asarray(expected, dtype=float)))
