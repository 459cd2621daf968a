"""Extinction-time, eigenvalue, and profile extraction from sampled runs."""

import numpy as np
import pytest

from extlab.analysis import (
    dirichlet_quotient_series,
    estimate_extinction_time,
    estimate_profile,
    fit_power_law,
    identify_eigenvalue,
    verify_main_theorem,
)
from extlab.dynamics import (
    IntegratorOptions,
    SystemSpec,
    Trajectory,
    integrate_desingularized,
    no_perturbation,
    to_symmetric_frame,
)
from extlab.errors import (
    AmbiguousEigenvalue,
    BeyondExtinction,
    DegenerateProjection,
    FrameMismatch,
    InsufficientRange,
    InsufficientSamples,
    NonpositiveValues,
    NotConverged,
)
from extlab.homog import power_norm
from extlab.oracle import extinction_time_scalar
from extlab.spectral import validate_and_decompose


def run(A, H, y0, **opts_kw):
    base = dict(rel_tol=1e-10, abs_tol=1e-13, rho_floor=1e-10)
    base.update(opts_kw)
    sys = SystemSpec(sd=validate_and_decompose(np.asarray(A, dtype=float)),
                     H=H, pert=no_perturbation())
    traj = integrate_desingularized(sys, np.asarray(y0, dtype=float),
                                    opts=IntegratorOptions(**base))
    return sys, traj


def stub_trajectory(t, rho, lam=None, alpha=1.0):
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    y = rho[:, None] ** (1.0 / alpha)
    lam = np.ones_like(t) if lam is None else np.asarray(lam, dtype=float)
    return Trajectory(
        t=t, y=y, rho=rho, lam=lam, v=np.ones_like(y), t0=float(t[0]),
        alpha=alpha, t_star_est=float(t[-1]) * 1.1, t_star_err=1e-6,
        stop_reason="extinction_floor", scheme="desingularized",
        coordinate_frame="original", rho_floor=float(rho[-1]),
    )


# --- extinction time ---

def test_extinction_time_scalar_case():
    a, alpha, y0 = 1.0, 2.0, 2.0
    sys, traj = run([[1.0]], power_norm(a, alpha, 1),
                    [y0], rel_tol=1e-11, abs_tol=1e-14, rho_floor=1e-12)
    T_hat, err = estimate_extinction_time(traj)
    T = extinction_time_scalar(a, alpha, y0)  # = 2 exactly
    assert abs(T_hat - T) <= max(err, 1e-8 * T)
    assert abs(T_hat - T) / T <= 1e-9
    assert err > 0.0


def test_extinction_time_error_bound_is_honest():
    sys, traj = run(np.diag([1.0, 2.0]), power_norm(1.0, 1.0, 2), [1.0, 1.0])
    T_hat, err = estimate_extinction_time(traj)
    deep = integrate_desingularized(
        sys, np.array([1.0, 1.0]),
        opts=IntegratorOptions(rel_tol=1e-12, abs_tol=1e-15, rho_floor=1e-13),
    )
    T_ref, _ = estimate_extinction_time(deep)
    assert abs(T_hat - T_ref) <= 5.0 * err


def test_extinction_time_needs_samples():
    t = np.linspace(0.0, 1.0, 8)
    with pytest.raises(InsufficientSamples):
        estimate_extinction_time(stub_trajectory(t, np.exp(-t)))


# --- quotient series and eigenvalue identification ---

def test_quotient_series_matches_rayleigh():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    sys, traj = run(A, power_norm(1.0, 1.0, 2), [1.0, 0.3])
    series = dirichlet_quotient_series(traj, sys.sd)
    assert series.shape == (len(traj), 2)
    v = traj.v
    direct = np.einsum("ij,jk,ik->i", v, A, v)
    assert np.allclose(series[:, 1], direct, atol=1e-10)


def test_identify_eigenvalue_generic_start():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    sys, traj = run(A, power_norm(1.0, 1.0, 2), [1.0, 0.3])
    series = dirichlet_quotient_series(traj, sys.sd)
    lam = identify_eigenvalue(series, sys.sd)
    assert lam == pytest.approx(1.0, abs=1e-9)  # generic data lands on lambda_min


def test_identify_eigenvalue_single_eigenvalue_shortcut():
    sys, traj = run(np.eye(2), power_norm(1.0, 1.0, 2), [0.6, 0.8])
    series = dirichlet_quotient_series(traj, sys.sd)
    assert identify_eigenvalue(series, sys.sd) == pytest.approx(1.0)


def test_identify_eigenvalue_nonsymmetric_z_frame():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    sd = validate_and_decompose(A)
    sys = SystemSpec(sd=sd, H=power_norm(1.0, 1.0, 2), pert=no_perturbation())
    traj = integrate_desingularized(sys, np.array([1.0, 0.5]))
    z = to_symmetric_frame(traj, sd)
    lam = identify_eigenvalue(dirichlet_quotient_series(z, sd), sd)
    assert lam in (2.0, 3.0)


def test_identify_eigenvalue_rejects_midpoint_series():
    sd = validate_and_decompose(np.diag([1.0, 2.3]))
    t = np.linspace(0.0, 1.0, 40)
    series = np.column_stack([t, np.full_like(t, 1.65)])  # equidistant
    with pytest.raises(AmbiguousEigenvalue):
        identify_eigenvalue(series, sd)


def test_identify_eigenvalue_rejects_drifting_tail():
    sd = validate_and_decompose(np.diag([1.0, 2.3]))
    t = np.linspace(0.0, 1.0, 60)
    lam = 2.3 - 0.002 * np.arange(60.0)  # walking away from the eigenvalue
    with pytest.raises(NotConverged):
        identify_eigenvalue(np.column_stack([t, lam]), sd)


def test_original_frame_guard_for_nonsymmetric():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    sd = validate_and_decompose(A)
    sys = SystemSpec(sd=sd, H=power_norm(1.0, 1.0, 2), pert=no_perturbation())
    traj = integrate_desingularized(sys, np.array([1.0, 0.5]))
    with pytest.raises(FrameMismatch):
        dirichlet_quotient_series(traj, sd)


# --- power-law fitting ---

def test_fit_power_law_recovers_exact_data():
    T = 3.0
    s = np.logspace(-6, -1, 40)
    d = 2.5 * s ** 1.7
    slope, coeff, r2 = fit_power_law(np.column_stack([T - s, d]), T)
    assert slope == pytest.approx(1.7, abs=1e-10)
    assert coeff == pytest.approx(2.5, rel=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_power_law_needs_range():
    T = 1.0
    s = np.logspace(-2.2, -2.0, 30)  # barely a fifth of a decade
    with pytest.raises(InsufficientRange):
        fit_power_law(np.column_stack([T - s, s]), T)
    with pytest.raises(InsufficientRange):
        fit_power_law(np.column_stack([T - s[:5], s[:5]]), T)


def test_fit_power_law_input_guards():
    T = 1.0
    s = np.logspace(-4, -1, 20)
    with pytest.raises(NonpositiveValues):
        fit_power_law(np.column_stack([T - s, -s]), T)
    pts = np.column_stack([T + s, s])  # times beyond T*
    with pytest.raises(BeyondExtinction):
        fit_power_law(pts, T)


# --- profile extraction and theorem verification ---

def test_scalar_profile_verifies():
    a, alpha = 1.0, 2.0
    H = power_norm(a, alpha, 1)
    sys, traj = run([[1.0]], H, [2.0], rel_tol=1e-11, abs_tol=1e-14,
                    rho_floor=1e-13)
    T_hat, _ = estimate_extinction_time(traj)
    series = dirichlet_quotient_series(traj, sys.sd)
    lam = identify_eigenvalue(series, sys.sd)
    prof = estimate_profile(traj, T_hat, sys.sd, lam, H)
    assert prof.Lambda == pytest.approx(1.0)
    # the law norm for a = 1, alpha = 2, Lambda = 1: |xi*| = sqrt(2)
    assert np.linalg.norm(prof.xi_star) == pytest.approx(np.sqrt(2.0), rel=1e-6)
    assert prof.residual_xiHA <= 1e-6
    assert np.linalg.norm(prof.v_star) == pytest.approx(1.0, rel=1e-12)
    report = verify_main_theorem(prof, traj, H)
    assert report.passed
    assert [c.name for c in report.clauses] == [
        "normalization_xiHA",
        "correction_exponents",
        "eigenvector_residual",
        "direction_convergence",
    ]
    d = report.as_dict()
    assert d["passed"] is True
    assert len(d["clauses"]) == 4


def test_gap_system_measures_correction_exponents():
    # eigenvalues 1 and 1.3: corrections decay as s^(mu/Lambda) and
    # s^(2 mu/Lambda) inside the default window, both measurable
    H = power_norm(1.0, 1.0, 2)
    sys, traj = run(np.diag([1.0, 1.3]), H, [1.0, 1.0])
    T_hat, _ = estimate_extinction_time(traj)
    lam = identify_eigenvalue(dirichlet_quotient_series(traj, sys.sd), sys.sd)
    prof = estimate_profile(traj, T_hat, sys.sd, lam, H)
    assert prof.eps_ir == pytest.approx(0.3, abs=0.02)
    assert prof.eps_ry == pytest.approx(0.6, abs=0.02)
    assert prof.fit_quality["ir"] >= 0.99
    assert prof.fit_quality["ry"] >= 0.99
    assert verify_main_theorem(prof, traj, H).passed


def test_wide_gap_reports_sentinel_exponents():
    # corrections fall below the sample noise before the window opens;
    # the fits must say "unmeasurably fast", not invent a slope
    H = power_norm(1.0, 1.0, 2)
    sys, traj = run(np.diag([1.0, 2.0]), H, [1.0, 1.0])
    T_hat, _ = estimate_extinction_time(traj)
    lam = identify_eigenvalue(dirichlet_quotient_series(traj, sys.sd), sys.sd)
    prof = estimate_profile(traj, T_hat, sys.sd, lam, H)
    assert prof.eps_ir == np.inf
    assert prof.eps_ry == np.inf
    assert verify_main_theorem(prof, traj, H).passed


def test_wrong_coefficient_fails_normalization():
    # analyzing with a miscalibrated H must fail the normalization clause
    H = power_norm(1.0, 2.0, 1)
    sys, traj = run([[1.0]], H, [2.0], rel_tol=1e-11, abs_tol=1e-14,
                    rho_floor=1e-13)
    T_hat, _ = estimate_extinction_time(traj)
    lam = identify_eigenvalue(dirichlet_quotient_series(traj, sys.sd), sys.sd)
    wrong = power_norm(3.0, 2.0, 1)
    prof = estimate_profile(traj, T_hat, sys.sd, lam, wrong)
    report = verify_main_theorem(prof, traj, wrong)
    assert not report.passed
    failing = {c.name for c in report.clauses if not c.passed}
    assert "normalization_xiHA" in failing


def test_profile_rejects_empty_projection():
    # data on the lambda = 1 eigenspace has nothing along lambda = 2
    H = power_norm(1.0, 1.0, 2)
    sys, traj = run(np.diag([1.0, 2.0]), H, [1.0, 0.0])
    T_hat, _ = estimate_extinction_time(traj)
    with pytest.raises(DegenerateProjection):
        estimate_profile(traj, T_hat, sys.sd, 2.0, H)


def test_profile_frame_guard():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    sd = validate_and_decompose(A)
    sys = SystemSpec(sd=sd, H=power_norm(1.0, 1.0, 2), pert=no_perturbation())
    traj = integrate_desingularized(sys, np.array([1.0, 0.5]))
    with pytest.raises(FrameMismatch):
        estimate_profile(traj, 1.0, sd, 2.0, sys.H)
