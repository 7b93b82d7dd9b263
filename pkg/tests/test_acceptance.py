"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. Criteria that the
implementation does not meet fail here on purpose; the README lists them
under known limitations.
"""

import math
import time

import numpy as np
import pytest

import dense_oracle as dense
from odefilter import SolverConfig, dense_output, smooth, solve
from odefilter.bench.experiments import cond_diagnostics, run_work_precision
from odefilter.errors import OdeFilterError
from odefilter.prior import ahat, discretize_closed_form, iwp_drift_and_dispersion, mfd_discretize, precond, qhat
from odefilter.problems import PROBLEMS, ODEProblem, lotka_volterra, three_body, van_der_pol
from odefilter.reference import final_time_error, rk_reference_solve
from odefilter.sqrt_gaussian import sqrt_predict, sqrt_smooth_step, sqrt_update
from odefilter.taylor import recursive_init_oracle, taylor_mode_init

ORDERS = (1, 3, 5, 7, 9, 11)

# log10 (cond, rho, min eigenvalue) per coordinate system; None marks a non-positive minimum eigenvalue
TABLE = {
    "proposed": {
        1: (1.3, 0.5, -1.2),
        3: (4.2, 0.8, -4.0),
        5: (7.2, 1.0, -7.0),
        7: (10.2, 1.2, -10.0),
        9: (13.2, 1.3, -13.0),
        11: (16.2, 1.4, -16.0),
    },
    "nordsieck": {
        1: (1.3, 0.5, -5.2),
        3: (4.3, 1.3, -9.1),
        5: (7.6, 2.3, -14.1),
        7: (11.0, 3.4, -19.8),
        9: (14.5, 4.5, -25.9),
        11: (17.4, 5.6, None),
    },
    "none": {
        1: (9.1, 8.5, -13.1),
        3: (28.9, 26.4, None),
        5: (43.7, 45.2, None),
        7: (57.3, 64.6, None),
        9: (68.5, 84.4, None),
        11: (79.9, 104.6, None),
    },
}
COLUMNS = ("log10_cond", "log10_rho", "log10_min_eig")


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(number, title, ok, detail):
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail}; {elapsed:.1f}s)")
        assert ok, detail

    return emit


def _table_mismatches(coordinates, tolerance):
    rows = [r for r in cond_diagnostics(ORDERS, h=1e-4) if r.coordinates == coordinates]
    bad = []
    for row in rows:
        for column, expected in zip(COLUMNS, TABLE[coordinates][row.nu]):
            got = getattr(row, column)
            if expected is None:
                if not math.isnan(got):
                    bad.append(f"nu={row.nu} {column}: expected non-positive, got {got:.2f}")
            elif math.isnan(got) or abs(round(got, 1) - expected) > tolerance + 1e-9:
                bad.append(f"nu={row.nu} {column}: {got:.2f} vs {expected}")
    return bad


def test_criterion_1_proposed_table(report):
    bad = _table_mismatches("proposed", 0.1)
    report(1, "proposed-coordinate conditioning table", not bad, "; ".join(bad) or "18 values within 0.1")


def test_criterion_2_nordsieck_and_unconditioned_table(report):
    bad = _table_mismatches("nordsieck", 0.3) + _table_mismatches("none", 0.3)
    report(2, "Nordsieck and unconditioned tables at h=1e-4", not bad, "; ".join(bad) or "36 values match")


def test_criterion_3_convergence_orders(report):
    steps = [0.1, 0.05, 0.025, 0.0125]
    rows = run_work_precision("lotka", "ek1", [2, 3, 4, 5], h_list=steps, compute_rmse=False)
    rows += run_work_precision("lotka", "ek0", [2, 3, 4], h_list=steps, compute_rmse=False)
    orders = {(r.method, r.nu): r.measured_order for r in rows}
    ok = all(r.ok for r in rows) and all(o is not None and o >= nu - 0.5 for (_, nu), o in orders.items())
    detail = ", ".join(f"{m} nu={nu}: {o:.2f}" if o is not None else f"{m} nu={nu}: none" for (m, nu), o in orders.items())
    report(3, "fixed-step convergence orders", ok, detail)


def test_criterion_4_order_eleven(report):
    problem = lotka_volterra()
    try:
        solution = smooth(solve(problem, SolverConfig(nu=11, abstol=1e-10, reltol=1e-10)))
    except OdeFilterError as exc:
        report(4, "adaptive EK1 at order 11", False, f"{type(exc).__name__}: {exc}")
        return
    finite = all(np.isfinite(s.cov_factor).all() for s in solution.filtered + solution.smoothed)
    error = final_time_error(solution, rk_reference_solve(problem, 1e-12, 1e-12))
    report(4, "adaptive EK1 at order 11", finite and error <= 1e-7, f"finite={finite}, final error {error:.2e}")


def test_criterion_5_three_body_period(report):
    problem = three_body()
    try:
        solution = solve(problem, SolverConfig(nu=8, abstol=1e-10, reltol=1e-10))
    except OdeFilterError as exc:
        report(5, "three-body orbit closes", False, f"{type(exc).__name__}: {exc}")
        return
    rms = float(np.sqrt(np.mean((solution.final_value - problem.x0) ** 2)))
    report(5, "three-body orbit closes", rms <= 1e-4, f"RMS distance to x0 {rms:.2e}")


def test_criterion_6_stiff_van_der_pol(report):
    problem = van_der_pol(mu=1000.0, t1=10.0)
    notes, ok = [], True
    for nu in (4, 5, 6, 7):
        try:
            solution = solve(problem, SolverConfig(nu=nu, abstol=1e-9, reltol=1e-9))
        except OdeFilterError as exc:
            ok = False
            notes.append(f"EK1 nu={nu} {type(exc).__name__}")
            continue
        finite = all(np.isfinite(s.mean).all() and np.isfinite(s.cov_factor).all() for s in solution.filtered)
        smallest = float(solution.step_sizes.min())
        ok &= finite and smallest <= 1e-10
        notes.append(f"EK1 nu={nu} min step {smallest:.1e}")
    # one EK0 order that finishes inside the budget settles the EK0 clause
    for nu in (4, 5, 6, 7):
        try:
            solution = solve(problem, SolverConfig(method="ek0", nu=nu, abstol=1e-9, reltol=1e-9, max_steps=10**6))
        except OdeFilterError as exc:
            notes.append(f"EK0 nu={nu} {type(exc).__name__}")
            continue
        attempts = solution.n_steps + solution.n_rejected
        ok = False
        notes.append(f"EK0 nu={nu} completed in {attempts} attempts")
        break
    report(6, "stiff van der Pol", ok, ", ".join(notes))


def _random_chain(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    k = int(rng.integers(1, n))
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    L_Q = dense.random_factor(rng, n, 1e2)
    L = dense.random_factor(rng, n, 1e2)
    m = rng.standard_normal(n)
    steps = []
    for _ in range(5):
        steps.append((rng.standard_normal((k, n)), rng.standard_normal(k)))
    return A, L_Q, m, L, steps


def _chain_errors(seed):
    A, L_Q, m0, L0, steps = _random_chain(seed)
    Q = L_Q @ L_Q.T
    m, L = m0, L0
    mD, CD = m0.copy(), L0 @ L0.T
    filt, filt_dense = [(m, L)], [(mD, CD)]
    for H, y in steps:
        L_pred = sqrt_predict(A, L, L_Q)
        m_pred = A @ m
        m, L, _, _ = sqrt_update(H, m_pred, L_pred, H @ m_pred - y)
        mP, CP = dense.predict(mD, CD, A, Q)
        mD, CD, _, _ = dense.update(mP, CP, H, H @ mP - y)
        filt.append((m, L))
        filt_dense.append((np.ravel(mD), CD))
    worst = 0.0
    for (m, L), (mD, CD) in zip(filt, filt_dense):
        worst = max(worst, np.abs(m - mD).max(), np.abs(L @ L.T - CD).max())
    mS, LS = filt[-1]
    mSD, CSD = filt_dense[-1]
    for (mF, LF), (mFD, CFD) in zip(filt[-2::-1], filt_dense[-2::-1]):
        mS, LS, _ = sqrt_smooth_step(mF, LF, mS, LS, A, L_Q)
        mSD, CSD, _ = dense.rts_step(mFD, CFD, mSD, CSD, A, Q)
        worst = max(worst, np.abs(mS - np.ravel(mSD)).max(), np.abs(LS @ LS.T - CSD).max())
    return worst


def test_criterion_7_oracle_equivalences(report):
    notes, ok = [], True

    kalman = max(_chain_errors(seed) for seed in range(25))
    ok &= kalman <= 1e-9
    notes.append(f"filter/smoother vs dense {kalman:.1e}")

    disc = 0.0
    for nu in range(1, 9):
        for h in (1e-3, 1e-2, 0.1, 0.5, 1.0):
            A, Q = discretize_closed_form(nu, h)
            s = precond(nu, h).scale
            disc = max(disc, np.abs(s[:, None] * ahat(nu) / s[None, :] - A).max() / np.abs(A).max())
            disc = max(disc, np.abs(s[:, None] * qhat(nu) * s[None, :] - Q).max() / np.abs(Q).max())
    for nu, h in ((1, 0.7), (2, 0.5), (3, 0.2), (5, 0.1)):
        F, Ld = iwp_drift_and_dispersion(nu)
        A_m, Q_m = mfd_discretize(F, Ld, h)
        s = precond(nu, h).scale
        disc = max(disc, np.abs(s[:, None] * ahat(nu) / s[None, :] - A_m).max() / np.abs(A_m).max())
        disc = max(disc, np.abs(s[:, None] * qhat(nu) * s[None, :] - Q_m).max() / np.abs(Q_m).max())
    ok &= disc <= 1e-10
    notes.append(f"discretisations {disc:.1e}")

    taylor = 0.0
    for name in sorted(PROBLEMS):
        problem = PROBLEMS[name]()
        for nu in range(1, 5):
            expected = recursive_init_oracle(problem, nu)
            taylor = max(taylor, np.abs(taylor_mode_init(problem, nu) - expected).max() / np.abs(expected).max())
    ok &= taylor <= 1e-9
    notes.append(f"Taylor initialisation {taylor:.1e}")
    report(7, "oracle equivalences", ok, ", ".join(notes))


def test_criterion_8_dense_output(report):
    base = lotka_volterra()
    calls = {"n": 0}

    def field(x):
        calls["n"] += 1
        return base.field(x)

    problem = ODEProblem(field, base.x0, base.t0, base.t1, base.name)
    solution = smooth(solve(problem, SolverConfig(nu=5, abstol=1e-8, reltol=1e-8)))
    before = calls["n"]
    for t in np.linspace(base.t0, base.t1, 997):
        dense_output(solution, t)
    evaluations = calls["n"] - before
    grid = 0.0
    for t, state in zip(solution.times, solution.smoothed):
        query = dense_output(solution, t)
        scale = max(1.0, np.abs(state.cov).max())
        grid = max(grid, np.abs(query.mean - state.mean).max() / max(1.0, np.abs(state.mean).max()))
        grid = max(grid, np.abs(query.cov - state.cov).max() / scale)
    report(8, "dense output contract", evaluations == 0 and grid <= 1e-10, f"{evaluations} field calls, grid mismatch {grid:.1e}")


def _covariances_degenerate(solution):
    for state in solution.filtered + solution.smoothed:
        if not np.isfinite(state.cov_factor).all():
            return True
        eig = np.linalg.eigvalsh(state.cov)
        if eig.min() < -1e-12 * max(eig.max(), 1e-300):
            return True
    return False


def test_criterion_9_preconditioner_necessity(report):
    problem = lotka_volterra()
    default = smooth(solve(problem, SolverConfig(nu=8, fixed_step=1e-3)))
    default_ok = not _covariances_degenerate(default)
    try:
        raw = smooth(solve(problem, SolverConfig(nu=8, fixed_step=1e-3, precondition=False)))
        raw_broken = _covariances_degenerate(raw)
        raw_note = "degenerate covariances" if raw_broken else "finite, positive semidefinite covariances"
    except (OdeFilterError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raw_broken, raw_note = True, type(exc).__name__
    report(
        9,
        "preconditioner necessity at nu=8, h=1e-3",
        default_ok and raw_broken,
        f"default path healthy={default_ok}, unpreconditioned path: {raw_note}",
    )
