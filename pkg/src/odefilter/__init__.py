"""Numerically stable probabilistic ODE filters and smoothers.

EK0/EK1 filtering and smoothing on integrated-Wiener-process priors with
taylor-mode initialisation, step-size-independent preconditioning and
square-root (QR-based) covariance propagation.
"""

from .filter import Method, Solution, SolverConfig, dense_output, smooth, solve
from .problems import ODEProblem, linear, lotka_volterra, three_body, van_der_pol
from .reference import final_time_error, rk_reference_solve, rmse_on_grid
from .sqrt_gaussian import SqrtGaussian
from .taylor import TaylorPoly, recursive_init_oracle, taylor_mode_init

__all__ = [
    "Method",
    "ODEProblem",
    "Solution",
    "SolverConfig",
    "SqrtGaussian",
    "TaylorPoly",
    "dense_output",
    "final_time_error",
    "linear",
    "lotka_volterra",
    "recursive_init_oracle",
    "rk_reference_solve",
    "rmse_on_grid",
    "smooth",
    "solve",
    "taylor_mode_init",
    "three_body",
    "van_der_pol",
]
