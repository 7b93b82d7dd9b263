"""Work-precision sweeps and conditioning diagnostics."""

import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from math import factorial

import numpy as np

from ..errors import OdeFilterError, SolverError
from ..filter import SolverConfig, smooth, solve
from ..prior import discretize_closed_form, qhat
from ..problems import PROBLEMS
from ..reference import final_time_error, rk_reference_solve, rmse_on_grid
from .records import BenchmarkRecord, CondRow, StepRow, TraceRow

THREADS_ENV = "ODEFILTER_BENCH_THREADS"
REFERENCE_TOL = 1e-12
RMSE_GRID = 1e-2

# Problems without a trustworthy explicit reference (stiff van der Pol).
_NO_REFERENCE = {"vanderpol"}

_reference_cache = {}
_reference_lock = threading.Lock()


def thread_count(default=1):
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def make_problem(name, mu=None, t1=None):
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    kwargs = {}
    if mu is not None:
        if name != "vanderpol":
            raise ValueError("--mu only applies to the vanderpol problem")
        kwargs["mu"] = mu
    if t1 is not None:
        kwargs["t1"] = t1
    return PROBLEMS[name](**kwargs)


def _reference_key(problem):
    params = tuple(sorted(problem.params.items()))
    return (problem.name, problem.t0, problem.t1, tuple(problem.x0), params)


def reference_for(problem):
    """DP54 reference at tolerance 1e-12, computed once per problem."""
    key = _reference_key(problem)
    with _reference_lock:
        if key not in _reference_cache:
            _reference_cache[key] = rk_reference_solve(problem, REFERENCE_TOL, REFERENCE_TOL)
        return _reference_cache[key]


def fit_order(steps, errors):
    """Least-squares slope of ``log(error)`` against ``log(step)``; ``None`` if under-determined."""
    pairs = [(s, e) for s, e in zip(steps, errors) if s and e and s > 0 and e > 0 and math.isfinite(e)]
    if len({s for s, _ in pairs}) < 2:
        return None
    x = np.log([s for s, _ in pairs])
    y = np.log([e for _, e in pairs])
    return float(np.polyfit(x, y, 1)[0])


def _run_cell(problem, method, nu, tol, fixed_step, reference, compute_rmse):
    base = dict(problem=problem.name, method=str(method), nu=int(nu), tol=tol, fixed_step=fixed_step)
    config = SolverConfig(
        method=method,
        nu=nu,
        abstol=tol if tol is not None else 1e-6,
        reltol=tol if tol is not None else 1e-6,
        fixed_step=fixed_step,
    )
    start = time.perf_counter()
    try:
        solution = solve(problem, config)
        rmse = None
        if reference is not None and compute_rmse:
            rmse = rmse_on_grid(smooth(solution), reference, RMSE_GRID)
        wall = time.perf_counter() - start
    except (OdeFilterError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return BenchmarkRecord(**base, wall_time=time.perf_counter() - start, failure=f"{type(exc).__name__}: {exc}")
    return BenchmarkRecord(
        **base,
        n_steps=solution.n_steps,
        n_field_evals=solution.n_field_evals,
        n_jacobian_evals=solution.n_jacobian_evals,
        wall_time=wall,
        rmse=rmse,
        final_time_error=final_time_error(solution, reference) if reference is not None else None,
        max_step=solution.max_step,
    )


def run_work_precision(problem, method, nu_list, tol_list=None, h_list=None, threads=None, compute_rmse=True):
    """One :class:`BenchmarkRecord` per ``(nu, tol)`` or ``(nu, h)`` cell.

    Cells run on up to ``threads`` worker threads (default: the
    ``ODEFILTER_BENCH_THREADS`` environment variable, else 1); the returned
    list is in sweep order regardless. Solver failures become rows with a
    ``failure`` message. ``measured_order`` is the slope of log final-time
    error against log max step over each order's successful cells.
    """
    if (tol_list is None) == (h_list is None):
        raise ValueError("pass exactly one of tol_list and h_list")
    if isinstance(problem, str):
        problem = make_problem(problem)
    reference = None if problem.name in _NO_REFERENCE else reference_for(problem)
    sweep = tol_list if tol_list is not None else h_list
    cells = [(nu, value) for nu in nu_list for value in sweep]
    threads = threads or thread_count()

    def job(cell):
        nu, value = cell
        tol, fixed = (value, None) if tol_list is not None else (None, value)
        return _run_cell(problem, method, nu, tol, fixed, reference, compute_rmse)

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(job, cells))
    else:
        records = [job(cell) for cell in cells]

    out = []
    for nu in nu_list:
        rows = [r for r in records if r.nu == nu]
        good = [r for r in rows if r.ok]
        order = fit_order([r.max_step for r in good], [r.final_time_error for r in good])
        out.extend(BenchmarkRecord(**{**r.__dict__, "measured_order": order}) for r in rows)
    return out


def nordsieck_scale(nu, h):
    """Diagonal of the (normalised) Nordsieck scaling ``h^(i - nu) / i!``.

    Nordsieck coordinates store ``h^i x^(i) / i!``; the common factor
    ``h^-nu`` keeps the transformed process noise of order one and does not
    change condition numbers or element ratios.
    """
    return np.array([h ** (i - nu) / factorial(i) for i in range(nu + 1)])


def _matrix_stats(Q):
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(Q)
        a = np.abs(Q)
        rho = a.max() / a.min()
        smallest = np.linalg.eigvalsh((Q + Q.T) / 2).min()
    log_min = math.log10(smallest) if smallest > 0 else float("nan")
    return float(np.log10(cond)), float(np.log10(rho)), log_min


def cond_diagnostics(nu_list, h=1e-4):
    """Conditioning of the process noise under the three coordinate systems.

    Rows come in the order proposed, nordsieck, none for each order. The
    proposed coordinates do not depend on ``h``; their ``h`` column is empty.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    rows = []
    for nu in nu_list:
        _, Q = discretize_closed_form(nu, h)
        D = nordsieck_scale(nu, h)
        rows.append(CondRow(nu, "proposed", None, *_matrix_stats(qhat(nu))))
        rows.append(CondRow(nu, "nordsieck", h, *_matrix_stats(D[:, None] * Q * D[None, :])))
        rows.append(CondRow(nu, "none", h, *_matrix_stats(Q)))
    return rows


class TraceFailed(SolverError):
    """The traced solve aborted; ``rows`` holds the steps accepted before that."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def _cond(matrix):
    with np.errstate(all="ignore"):
        if not np.all(np.isfinite(matrix)):
            return math.inf
        value = np.linalg.cond(matrix)
    return float(value) if np.isfinite(value) else math.inf


def cond_trace(problem, nu, tol=1e-4, method="ek1"):
    """Condition numbers of every accepted step's predicted covariance factor.

    The solve runs in the proposed coordinates; for each step the same
    factor is also mapped to original coordinates (``T L``) and to
    Nordsieck coordinates (``N T L``). Non-finite shadow factors give
    ``inf``. If the solve itself aborts, :class:`TraceFailed` carries the
    rows recorded so far.
    """
    if isinstance(problem, str):
        problem = make_problem(problem)
    d = problem.dim
    rows = []

    def monitor(info):
        L = info.predicted_factor
        original = info.precond.apply(L)
        N = np.repeat(nordsieck_scale(nu, info.h), d)
        rows.append(
            TraceRow(len(rows) + 1, info.t, info.h, _cond(L), _cond(N[:, None] * original), _cond(original))
        )

    try:
        solve(problem, SolverConfig(method=method, nu=nu, abstol=tol, reltol=tol), monitor=monitor)
    except SolverError as exc:
        raise TraceFailed(str(exc), rows) from exc
    return rows


def step_series(solution):
    return [
        StepRow(i + 1, float(t), float(h), float(s))
        for i, (t, h, s) in enumerate(zip(solution.times[1:], solution.step_sizes, solution.local_diffusions))
    ]
