"""Integrators, frames, forcing bounds, and the extinction-radius certificate."""

import math
import warnings

import numpy as np
import pytest

from helpers import diagonalizable_with_spectrum, symmetric_with_spectrum

from extlab.dynamics import (
    IntegratorOptions,
    SystemSpec,
    bounded_perturbation,
    custom_perturbation,
    extinction_radius,
    integrate_desingularized,
    integrate_direct,
    no_perturbation,
    rhs,
    to_symmetric_frame,
    transformed_system,
)
from extlab.errors import DimensionMismatch, MissingBoundConstants
from extlab.homog import power_norm, weighted_pnorm
from extlab.oracle import extinction_time_scalar, scalar_closed_form
from extlab.spectral import validate_and_decompose


def make_system(A, H, pert=None):
    return SystemSpec(
        sd=validate_and_decompose(np.asarray(A, dtype=float)),
        H=H,
        pert=pert if pert is not None else no_perturbation(),
    )


def tight_opts(**kw):
    base = dict(rel_tol=1e-11, abs_tol=1e-14, rho_floor=1e-10)
    base.update(kw)
    return IntegratorOptions(**base)


def curve_error(traj, a, alpha, y0, keep=None):
    """Max relative deviation from the scalar closed form at matched countdown.

    Comparing at matched absolute time is ill conditioned: a T* error of
    size eps*T* is amplified by s^(1/alpha - 1) near the end.  Matching on
    the trajectory's own countdown tests the shape of the curve instead.
    """
    s = traj.t_star_est - traj.t
    if keep is None:
        keep = np.ones(len(s), dtype=bool)
    keep = keep & (s > 0)
    pred = np.sign(y0) * (alpha * a * s[keep]) ** (1.0 / alpha)
    got = traj.y[keep, 0]
    return float(np.max(np.abs(got - pred) / np.abs(pred)))


# --- scalar ground truth ---

def test_desingularized_matches_scalar_closed_form():
    a, alpha, y0 = 1.0, 2.0, 2.0
    sys = make_system([[1.0]], power_norm(a, alpha, 1))
    traj = integrate_desingularized(sys, np.array([y0]), opts=tight_opts())
    assert traj.stop_reason == "extinction_floor"
    T = extinction_time_scalar(a, alpha, y0)
    assert traj.t_star_est == pytest.approx(T, rel=1e-9)
    assert traj.t_star_err <= 1e-8 * T
    assert curve_error(traj, a, alpha, y0) <= 1e-6


def test_direct_matches_scalar_closed_form():
    a, alpha, y0 = 2.0, 0.75, -0.5
    sys = make_system([[1.0]], power_norm(a, alpha, 1))
    # stop a bit below |y| = 1e-6 |y0|, the last depth where the matched
    # countdown metric is still conditioned against the T* bracket error
    traj = integrate_direct(
        sys, np.array([y0]), opts=tight_opts(rho_floor=10.0 ** (-6.2 * alpha))
    )
    T = extinction_time_scalar(a, alpha, y0)
    assert traj.t_star_est == pytest.approx(T, rel=1e-8)
    keep = np.abs(traj.y[:, 0]) >= 1e-6 * abs(y0)
    assert curve_error(traj, a, alpha, y0, keep) <= 1e-6
    # closed form itself agrees with the samples at their own times away
    # from the end, where time matching is still well conditioned
    mid = traj.rho > 1e-3 * traj.rho[0]
    ref = scalar_closed_form(a, alpha, y0, traj.t[mid])
    assert np.max(np.abs(traj.y[mid, 0] - ref)) <= 1e-6 * abs(y0)


def test_schemes_agree_on_plane_system():
    sys = make_system(np.diag([1.0, 2.0]), power_norm(1.0, 1.0, 2))
    y0 = np.array([1.0, 1.0])
    td = integrate_desingularized(sys, y0, opts=tight_opts(rel_tol=1e-10))
    tt = integrate_direct(sys, y0, opts=tight_opts(rel_tol=1e-10, rho_floor=1e-8))
    assert td.t_star_est == pytest.approx(tt.t_star_est, rel=1e-8)


# --- qualitative invariants ---

def test_density_decreases_without_forcing():
    sys = make_system(symmetric_with_spectrum([1.0, 2.0, 3.5], seed=1),
                      power_norm(1.0, 1.0, 3))
    traj = integrate_desingularized(sys, np.array([1.0, -0.7, 0.4]))
    assert np.all(np.diff(traj.rho) <= 1e-8 * traj.rho[0])


def test_quotient_monotone_and_bounded_without_forcing():
    A = symmetric_with_spectrum([0.5, 1.5, 4.0], seed=5)
    sys = make_system(A, power_norm(1.0, 1.0, 3))
    traj = integrate_desingularized(sys, np.array([0.3, 1.0, -0.2]))
    # Rayleigh quotient along gradient-like flow never increases
    assert np.all(np.diff(traj.lam) <= 1e-8)
    assert np.all(traj.lam >= 0.5 - 1e-8)
    assert np.all(traj.lam <= 4.0 + 1e-8)


def test_eigenvector_ray_is_invariant():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    v0 = np.array([1.0, 1.0]) / math.sqrt(2.0)  # eigenvector, lambda = 3
    a, alpha = 1.0, 1.0
    sys = make_system(A, power_norm(a, alpha, 2))
    traj = integrate_desingularized(sys, 2.0 * v0, opts=tight_opts())
    drift = np.abs(traj.v - v0).max()
    assert drift <= 1e-8
    # on a ray the flow is the scalar problem with coefficient lambda*a
    T = extinction_time_scalar(3.0 * a, alpha, 2.0)
    assert traj.t_star_est == pytest.approx(T, rel=1e-8)


def test_rescaling_h_rescales_time_only():
    A = symmetric_with_spectrum([1.0, 2.0], seed=2)
    y0 = np.array([0.8, -0.5])
    c = 3.7
    t1 = integrate_desingularized(make_system(A, power_norm(1.0, 1.0, 2)), y0,
                                  opts=tight_opts())
    t2 = integrate_desingularized(make_system(A, power_norm(c, 1.0, 2)), y0,
                                  opts=tight_opts())
    assert t2.t_star_est == pytest.approx(t1.t_star_est / c, rel=1e-8)
    # without forcing the clock-variable flow is dy/dtau = -Ay for any H,
    # so directions at matched density must coincide; the bound is the
    # piecewise-linear interpolation error across the sample spacing
    u1, u2 = np.log(t1.rho), np.log(t2.rho)
    keep = (u2 >= max(u1.min(), u2.min())) & (u2 <= min(u1.max(), u2.max()))
    for j in range(2):
        vi = np.interp(-u2[keep], -u1, t1.v[:, j])
        assert np.abs(vi - t2.v[keep, j]).max() <= 1e-4


def test_nonsymmetric_pullback_and_frame_change():
    A, _ = diagonalizable_with_spectrum([1.0, 3.0], seed=4)
    sys = make_system(A, power_norm(1.0, 1.0, 2))
    y0 = np.array([1.0, 0.3])
    traj = integrate_desingularized(sys, y0, opts=tight_opts(rel_tol=1e-10))
    assert traj.coordinate_frame == "original"
    assert np.allclose(traj.y[0], y0, atol=1e-12)
    z = to_symmetric_frame(traj, sys.sd)
    assert z.coordinate_frame == "z_coordinates"
    S = sys.sd.transform
    assert np.allclose(z.y, traj.y @ S.T, atol=1e-12)
    # z-frame quotient stays inside the spectral hull
    assert np.all(z.lam >= 1.0 - 1e-8)
    assert np.all(z.lam <= 3.0 + 1e-8)


def test_transformed_system_is_cached():
    A, _ = diagonalizable_with_spectrum([1.0, 2.0], seed=9)
    sys = make_system(A, power_norm(1.0, 1.0, 2))
    assert transformed_system(sys) is transformed_system(sys)


def test_rhs_shape_guard():
    sys = make_system(np.eye(2), power_norm(1.0, 1.0, 2))
    with pytest.raises(DimensionMismatch):
        integrate_desingularized(sys, np.array([1.0, 2.0, 3.0]))
    f = rhs(sys, 0.0, np.array([1.0, 1.0]))
    assert f.shape == (2,)
    assert np.allclose(f, -power_norm(1.0, 1.0, 2)(np.ones(2)) * np.ones(2))


def test_scalar_dimension_works():
    sys = make_system([[4.0]], power_norm(1.0, 0.5, 1))
    traj = integrate_desingularized(sys, np.array([1.0]))
    assert traj.stop_reason == "extinction_floor"
    assert traj.t_star_est == pytest.approx(
        extinction_time_scalar(4.0, 0.5, 1.0), rel=1e-8
    )


# --- stopping and budgets ---

def test_max_steps_budget_respected():
    sys = make_system(np.diag([1.0, 1.3]), power_norm(1.0, 1.0, 2))
    traj = integrate_desingularized(
        sys, np.array([1.0, 1.0]), opts=IntegratorOptions(max_steps=30)
    )
    assert traj.stop_reason == "max_steps"
    assert len(traj) <= 31


def test_tau_budget_stops_the_clock():
    sys = make_system([[1.0]], power_norm(1.0, 1.0, 1))
    traj = integrate_desingularized(
        sys, np.array([1.0]), opts=IntegratorOptions(tau_max=0.5)
    )
    assert traj.stop_reason == "user"
    assert traj.rho[-1] > traj.rho_floor


def test_forced_run_reaches_floor():
    alpha = 1.0
    pert = bounded_perturbation(M=0.2, delta=1.0, alpha=alpha, n=2)
    sys = make_system(np.eye(2), power_norm(1.0, alpha, 2), pert)
    traj = integrate_desingularized(sys, np.array([0.4, 0.3]))
    assert traj.stop_reason == "extinction_floor"
    assert traj.rho[-1] <= traj.rho_floor


def test_builtin_forcing_saturates_its_certificate():
    alpha, delta, M = 1.5, 0.5, 0.7
    pert = bounded_perturbation(M=M, delta=delta, alpha=alpha, n=2)
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = rng.standard_normal(2) * 10.0 ** rng.uniform(-3, 1)
        t = rng.uniform(0.0, 5.0)
        fy = np.linalg.norm(pert.evaluator(t, y))
        bound = M * np.linalg.norm(y) ** (1.0 - alpha + delta)
        assert fy <= bound * (1.0 + 1e-12)


def test_custom_forcing_bound_is_spot_checked():
    # a forcing that violates its declared certificate gets flagged
    bad = custom_perturbation(lambda t, y: np.array([5.0, 0.0]),
                              M=0.01, delta=1.0)
    sys = make_system(np.eye(2), power_norm(1.0, 1.0, 2), bad)
    assert sys.pert_violations > 0


# --- small-data radius ---

def test_radius_unforced_is_unbounded():
    sys = make_system(np.diag([1.0, 2.0]), power_norm(2.0, 1.0, 2))
    r0, a0 = extinction_radius(sys)
    assert r0 == math.inf
    assert a0 == pytest.approx(1.0)  # c1 * lambda_min / 2 = 2 * 1 / 2


def test_radius_frozen_case():
    # a0 = 2*1/2 = 1; r0 = (a0/c_star)^(1/delta) / 2 = 0.5
    pert = bounded_perturbation(M=1.0, delta=1.0, alpha=1.0, n=2)
    sys = make_system(np.eye(2), power_norm(2.0, 1.0, 2), pert)
    r0, a0 = extinction_radius(sys)
    assert a0 == pytest.approx(1.0)
    assert r0 == pytest.approx(0.5)


def test_radius_needs_certificate():
    pert = custom_perturbation(lambda t, y: np.zeros(2))
    sys = make_system(np.eye(2), power_norm(1.0, 1.0, 2), pert)
    with pytest.raises(MissingBoundConstants):
        extinction_radius(sys)


def test_radius_respects_domain_cap():
    pert = custom_perturbation(lambda t, y: np.zeros(2),
                               M=1e-6, delta=1.0, r_star=0.1)
    sys = make_system(np.eye(2), power_norm(2.0, 1.0, 2), pert)
    r0, _ = extinction_radius(sys)
    assert r0 == pytest.approx(0.1)


# --- anisotropic coefficient sanity ---

def test_weighted_coefficient_runs_clean():
    H = weighted_pnorm([1.0, 3.0], p=2.0, alpha=1.0)
    sys = make_system(symmetric_with_spectrum([1.0, 2.0], seed=8), H)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        traj = integrate_desingularized(sys, np.array([0.9, 0.1]))
    assert traj.stop_reason == "extinction_floor"
    assert np.all(np.isfinite(traj.y))
