"""Closed forms, the isotropic quadrature oracle, and the reference integrator."""

import math

import numpy as np
import pytest

from extlab.dynamics import (
    IntegratorOptions,
    SystemSpec,
    bounded_perturbation,
    integrate_desingularized,
    no_perturbation,
)
from extlab.errors import BeyondExtinction, FrameMismatch, NonpositiveValue
from extlab.homog import power_norm
from extlab.oracle import (
    extinction_time_scalar,
    reference_integrate,
    scalar_closed_form,
    special_case_profile,
)
from extlab.spectral import validate_and_decompose


def isotropic(a, alpha, n, pert=None):
    return SystemSpec(
        sd=validate_and_decompose(np.eye(n)),
        H=power_norm(a, alpha, n),
        pert=pert if pert is not None else no_perturbation(),
    )


def test_extinction_time_formula():
    assert extinction_time_scalar(1.0, 2.0, 2.0) == pytest.approx(2.0)
    assert extinction_time_scalar(2.0, 0.5, 4.0) == pytest.approx(2.0)
    with pytest.raises(NonpositiveValue):
        extinction_time_scalar(-1.0, 1.0, 1.0)
    with pytest.raises(NonpositiveValue):
        extinction_time_scalar(1.0, 0.0, 1.0)


def test_closed_form_endpoints_and_sign():
    T = extinction_time_scalar(1.0, 1.0, -3.0)
    assert scalar_closed_form(1.0, 1.0, -3.0, 0.0) == pytest.approx(-3.0)
    assert scalar_closed_form(1.0, 1.0, -3.0, T) == pytest.approx(0.0, abs=1e-12)
    t = 0.5 * T
    # |y(t)|^alpha falls linearly in t
    assert abs(scalar_closed_form(1.0, 1.0, -3.0, t)) == pytest.approx(
        (3.0 - t), rel=1e-14
    )
    assert scalar_closed_form(1.0, 1.0, -3.0, t) < 0.0


def test_closed_form_array_and_guard():
    ts = np.linspace(0.0, 1.9, 7)
    ys = scalar_closed_form(1.0, 2.0, 2.0, ts)
    assert ys.shape == ts.shape
    assert np.all(np.diff(ys) < 0.0)
    with pytest.raises(BeyondExtinction):
        scalar_closed_form(1.0, 2.0, 2.0, 2.0 + 1e-9)


def test_quadrature_profile_unforced_shortcut():
    a, alpha = 1.0, 2.0
    sys = isotropic(a, alpha, 2)
    y0 = np.array([1.2, -0.9])
    traj = integrate_desingularized(sys, y0, opts=IntegratorOptions(rel_tol=1e-10))
    prof = special_case_profile(a, alpha, y0, traj, sys.pert)
    # no forcing: the profile is the initial direction at the law norm
    expect = (alpha * a) ** (1.0 / alpha) * y0 / np.linalg.norm(y0)
    assert np.allclose(prof.xi_star, expect, rtol=1e-12)
    assert prof.T_star == pytest.approx(
        extinction_time_scalar(a, alpha, np.linalg.norm(y0)), rel=1e-9
    )
    assert prof.J_star == 0.0
    assert np.allclose(prof.eta_star, 0.0)


def test_quadrature_profile_forced_norm_law():
    # the J and eta corrections cancel in the norm: |xi*| = (alpha a)^(1/alpha)
    a, alpha = 1.0, 1.0
    pert = bounded_perturbation(M=0.3, delta=1.0, alpha=alpha, n=2)
    sys = isotropic(a, alpha, 2, pert)
    y0 = np.array([0.8, 0.6])
    traj = integrate_desingularized(
        sys, y0, opts=IntegratorOptions(rel_tol=1e-10, abs_tol=1e-13)
    )
    prof = special_case_profile(a, alpha, y0, traj, pert, tol=1e-8)
    assert prof.achieved_tol <= 1e-8
    norm = float(np.linalg.norm(prof.xi_star))
    assert norm == pytest.approx((alpha * a) ** (1.0 / alpha), rel=1e-5)
    # forcing genuinely rotated the profile away from the initial direction
    cosang = float(prof.xi_star @ y0) / (norm * np.linalg.norm(y0))
    assert cosang < 1.0 - 1e-6
    assert prof.g_of_t.shape[1] == 2
    assert abs(prof.g_of_t[-1, 1]) <= 1e-10  # g vanishes at the end by construction


def test_quadrature_profile_consistent_across_tolerances():
    a, alpha = 2.0, 1.0
    pert = bounded_perturbation(M=0.2, delta=0.5, alpha=alpha, n=2)
    sys = isotropic(a, alpha, 2, pert)
    y0 = np.array([0.5, 0.4])
    traj = integrate_desingularized(
        sys, y0, opts=IntegratorOptions(rel_tol=1e-10, abs_tol=1e-13)
    )
    p1 = special_case_profile(a, alpha, y0, traj, pert, tol=1e-6)
    p2 = special_case_profile(a, alpha, y0, traj, pert, tol=1e-9)
    assert np.allclose(p1.xi_star, p2.xi_star, rtol=1e-5)


def test_quadrature_profile_alpha_mismatch_rejected():
    sys = isotropic(1.0, 1.0, 2)
    y0 = np.array([1.0, 0.0])
    traj = integrate_desingularized(sys, y0)
    with pytest.raises(FrameMismatch):
        special_case_profile(1.0, 2.0, y0, traj, sys.pert)


def test_reference_matches_scalar_closed_form():
    a, alpha, y0 = 1.0, 1.0, 1.5
    sys = SystemSpec(
        sd=validate_and_decompose(np.array([[1.0]])),
        H=power_norm(a, alpha, 1),
        pert=no_perturbation(),
    )
    traj = reference_integrate(sys, np.array([y0]), tol=1e-9)
    assert traj.scheme == "reference"
    # compare at interior checkpoints; the closed form is exact
    idx = np.arange(0, len(traj), max(1, len(traj) // 20))
    ref = scalar_closed_form(a, alpha, y0, traj.t[idx])
    assert np.max(np.abs(traj.y[idx, 0] - ref)) <= 1e-8 * y0


def test_reference_agrees_with_adaptive_scheme():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    sys = SystemSpec(
        sd=validate_and_decompose(A),
        H=power_norm(1.0, 1.0, 2),
        pert=no_perturbation(),
    )
    y0 = np.array([1.0, 0.2])
    ref = reference_integrate(sys, y0, tol=1e-9)
    adp = integrate_desingularized(
        sys, y0, opts=IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14)
    )
    # compare time and direction at matched log-density; matching on time
    # instead would divide the phase error by the countdown and blow up.
    # cubic interpolation of the dense fixed-step grid keeps the comparison
    # error below the integration error instead of swamping it
    from scipy.interpolate import PchipInterpolator

    u_ref, u_adp = np.log(ref.rho), np.log(adp.rho)
    lo = max(u_ref.min(), u_adp.min())
    hi = min(u_ref.max(), u_adp.max())
    keep = (u_adp >= lo) & (u_adp <= hi)
    ti = PchipInterpolator(-u_ref, ref.t)(-u_adp[keep])
    assert np.max(np.abs(ti - adp.t[keep])) <= 1e-7 * ref.t_star_est
    for j in range(2):
        vi = PchipInterpolator(-u_ref, ref.v[:, j])(-u_adp[keep])
        assert np.max(np.abs(vi - adp.v[keep, j])) <= 1e-6
    assert ref.t_star_est == pytest.approx(adp.t_star_est, rel=1e-8)
