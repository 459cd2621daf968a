"""Asymptotic structure extraction from computed trajectories.

Everything here consumes an immutable Trajectory and returns plain data, so
the routines are safe to run concurrently.  The central objects are the
Dirichlet-type quotient lambda(t) = v.Av, which selects an eigenvalue of A
as t approaches the extinction time, and the profile vector xi* in

    y(t) ~ (T* - t)^(1/alpha) xi*.

A recurring trap documented once here: all countdown values s = T* - t must
use the extinction estimate derived from the *same* trajectory.  Absolute
clock error accumulated early in a run cancels in T* - t_i only when both
ends carry it; mixing in an externally sourced T* (however accurate) leaves
s with an absolute error that swamps the bottom fit decades.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import (
    AmbiguousEigenvalue,
    BeyondExtinction,
    DegenerateProjection,
    FitRejected,
    FrameMismatch,
    InsufficientRange,
    InsufficientSamples,
    NonpositiveValues,
    NotConverged,
)
from .homog import HomogeneousFn
from .spectral import SpectralData

__all__ = [
    "AsymptoticProfile",
    "ClauseCheck",
    "VerificationReport",
    "estimate_extinction_time",
    "dirichlet_quotient_series",
    "identify_eigenvalue",
    "fit_power_law",
    "estimate_profile",
    "verify_main_theorem",
]

# hard lower bound on any relative noise floor
_NOISE_REL = 1e-12


def _sample_noise(traj: Trajectory, T_star: float, s: np.ndarray) -> np.ndarray:
    """Per-sample relative noise floor for terminal-window fits.

    Two contributions: the countdown cancellation -- s = T* - t keeps an
    absolute error ~ eps * T*, which is eps * T*/s in relative terms and
    dominates near the floor -- and the integrator's accumulated drift,
    which grows with the number of accepted steps, each contributing on
    the order of the step tolerance.
    """
    eps = np.finfo(float).eps
    cancel = eps * max(abs(T_star), abs(traj.t0), 1.0) / (traj.alpha * s)
    drift = 10.0 * len(traj) * traj.sample_tol
    return cancel + drift + _NOISE_REL


@dataclass(frozen=True)
class AsymptoticProfile:
    """Fitted asymptotics of one run.

    ``xi_star`` and ``v_star`` live in the original coordinates (pulled back
    through S^-1 when the run was analyzed in the symmetric frame of a
    nonsymmetric matrix); ``xi_star_fit`` keeps the raw fit-frame vector for
    equivariance checks against the trajectory itself.  Exponents are
    reported as measured slope surpluses with +inf as the sentinel for
    residuals that sit below the noise floor across the whole window.
    """

    Lambda: float
    xi_star: np.ndarray
    v_star: np.ndarray
    alpha: float
    eps_main: float
    eps_ir: float
    eps_ry: float
    residual_xiHA: float
    fit_quality: dict
    frame: str
    T_star: float
    eigvec_residual: float
    xi_star_fit: np.ndarray
    fit_frame: str


@dataclass(frozen=True)
class ClauseCheck:
    name: str
    passed: bool
    measured: float
    threshold: float
    comparator: str     # "<=" or ">="


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    clauses: tuple
    Lambda: float
    alpha: float

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "Lambda": self.Lambda,
            "alpha": self.alpha,
            "clauses": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "measured": c.measured,
                    "threshold": c.threshold,
                    "comparator": c.comparator,
                }
                for c in self.clauses
            ],
        }


def estimate_extinction_time(traj: Trajectory) -> tuple[float, float]:
    """Refine t_star_est by extrapolating the asymptotically linear rho(t).

    Returns (T_star, err) where err combines the linear/quadratic
    extrapolation spread, the fit's statistical intercept error and the
    integrator's own bracket.
    """
    rho = traj.rho
    t = traj.t
    if len(t) < 3:
        raise InsufficientSamples("need at least a handful of samples")
    # monotone onset: last index where rho still increased
    rising = np.nonzero(np.diff(rho) >= 0)[0]
    onset = int(rising[-1]) + 1 if len(rising) else 0
    if len(t) - onset < 20:
        raise InsufficientSamples(
            f"only {len(t) - onset} samples past the monotone onset, need 20"
        )
    t = t[onset:]
    rho = rho[onset:]

    win = rho <= 10.0 * rho[-1]
    if np.count_nonzero(win) < 5:
        win = np.zeros(len(rho), bool)
        win[-20:] = True
    tw = t[win]
    rw = rho[win]

    tc = tw - tw.mean()
    c1, c0 = np.polyfit(tc, rw, 1)
    if c1 >= 0:
        raise NotConverged("density not decreasing over the terminal window")
    T_lin = tw.mean() - c0 / c1

    q2, q1, q0 = np.polyfit(tc, rw, 2)
    disc = q1 * q1 - 4.0 * q2 * q0
    if abs(q2) > 1e-300 and disc >= 0:
        roots = np.array(
            [(-q1 + math.sqrt(disc)) / (2 * q2), (-q1 - math.sqrt(disc)) / (2 * q2)]
        )
        T_quad = tw.mean() + roots[np.argmin(np.abs(roots - (T_lin - tw.mean())))]
    else:
        T_quad = T_lin

    resid = rw - (c0 + c1 * tc)
    se = float(np.std(resid) / (abs(c1) * math.sqrt(len(tw))))
    err = abs(T_quad - T_lin) + se + traj.t_star_err
    return float(T_quad), float(err)


def _require_symmetric_frame(traj: Trajectory, sd: SpectralData) -> None:
    if sd.is_symmetric:
        if traj.coordinate_frame not in ("original", "z_coordinates"):
            raise FrameMismatch(
                f"unexpected coordinate frame {traj.coordinate_frame!r}"
            )
    elif traj.coordinate_frame != "z_coordinates":
        raise FrameMismatch(
            "nonsymmetric matrix: push the trajectory through "
            "to_symmetric_frame before quotient analysis"
        )


def dirichlet_quotient_series(traj: Trajectory, sd: SpectralData) -> np.ndarray:
    """Recompute lambda(t) = v.Av per sample; columns (t, lambda)."""
    _require_symmetric_frame(traj, sd)
    if traj.coordinate_frame == "z_coordinates":
        diag = np.diag(sd.diagonal)
        lam = np.einsum("ij,j,ij->i", traj.v, diag, traj.v)
    else:
        lam = np.einsum("ij,jk,ik->i", traj.v, sd.matrix, traj.v)
    return np.column_stack([traj.t, lam])


def identify_eigenvalue(
    series: np.ndarray, sd: SpectralData, tail_fraction: float = 0.25
) -> float:
    """Match the tail average of lambda(t) to a distinct eigenvalue of A."""
    series = np.asarray(series, float)
    if series.ndim != 2 or series.shape[0] < 1:
        raise InsufficientSamples("empty quotient series")
    if not (0.0 < tail_fraction <= 0.5):
        raise ValueError("tail_fraction must lie in (0, 1/2]")

    distinct = sd.distinct
    if len(distinct) == 1:
        return float(distinct[0])

    lam = series[:, 1]
    m = len(lam)
    k = max(1, int(math.ceil(tail_fraction * m)))
    tail = lam[m - k:]
    avg = float(tail.mean())

    diffs = np.abs(distinct - avg)
    order = np.argsort(diffs)
    best = float(distinct[order[0]])
    if len(order) > 1 and diffs[order[1]] - diffs[order[0]] < 1e-12:
        raise AmbiguousEigenvalue(
            f"tail average {avg:.6g} equidistant from {best:.6g} "
            f"and {distinct[order[1]]:.6g}"
        )
    mu = sd.mu(best)
    if diffs[order[0]] >= mu / 4.0:
        raise AmbiguousEigenvalue(
            f"tail average {avg:.6g} sits {diffs[order[0]]:.3g} from the "
            f"nearest eigenvalue, beyond the mu/4 = {mu / 4.0:.3g} capture radius"
        )

    # settling check: |lambda - best| must not grow across the tail
    if k > 3:
        d = np.abs(tail - best)
        h = k // 2
        first, second = float(d[:h].mean()), float(d[h:].mean())
        slack = 1e-12 * max(1.0, abs(best))
        if second > first + slack:
            raise NotConverged(
                f"|lambda - {best:.6g}| grows across the tail "
                f"({first:.3e} -> {second:.3e})"
            )
    return best


def fit_power_law(points: np.ndarray, T_star: float) -> tuple[float, float, float]:
    """Least squares of log m against log(T* - t); returns (slope, coeff, R2)."""
    points = np.asarray(points, float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must be an (m, 2) array of (t, value)")
    t = points[:, 0]
    m = points[:, 1]
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise NonpositiveValues("power-law fit requires positive finite values")
    s = T_star - t
    if np.any(s <= 0):
        raise BeyondExtinction("samples at or beyond T_star in the fit window")
    if len(s) < 10:
        raise InsufficientRange(f"{len(s)} points, need at least 10")
    span = math.log10(float(s.max()) / float(s.min()))
    if span < 1.5:
        raise InsufficientRange(
            f"window spans {span:.2f} decades of T*-t, need 1.5"
        )
    X = np.log(s)
    Y = np.log(m)
    slope, intercept = np.polyfit(X, Y, 1)
    fitted = intercept + slope * X
    ss_res = float(np.sum((Y - fitted) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    return float(slope), float(math.exp(intercept)), float(r2)


def _fit_window(traj: Trajectory, T_star: float, fit_decades: float):
    s = T_star - traj.t
    valid = (traj.rho >= 100.0 * traj.rho_floor) & (s > 0)
    if np.count_nonzero(valid) < 10:
        raise InsufficientSamples(
            "fewer than 10 samples above the roundoff guard"
        )
    s_low = float(s[valid].min())
    win = valid & (s <= s_low * 10.0 ** fit_decades)
    if np.count_nonzero(win) < 10:
        raise InsufficientSamples(
            "fewer than 10 samples in the terminal fit window"
        )
    return win, s


def _fit_constant_plus_power(tw, sw, w, noise, wscale, T_star):
    """Estimate the constant xi in w(s) = xi + c s^eps + noise.

    The exponent is probed on consecutive differences of w, where the
    constant drops out exactly: |dw/ds| ~ |c| eps s^(eps-1).  A seeded
    subtract-and-refit loop covers windows too short for the difference
    probe, and the noise-weighted mean is the answer when no correction is
    measurable at all.
    """
    order = np.argsort(sw)
    ss = sw[order]
    ws = w[order]
    nz = noise[order]

    # Probe at lag 1 first; near eps = 1 the per-step difference |c| ds can
    # sit below the sample noise while the correction itself is far above
    # it, so retry at a one-decade lag where the difference accumulates.
    # The regression slope is eps - 1 at any lag, only the prefactor moves.
    span_decades = math.log10(float(ss[-1] / ss[0]))
    decade = max(2, int(round((len(ss) - 1) / max(span_decades, 1e-9))))
    eps_hat = None
    for lag, min_good, min_span in ((1, 8, 1.0), (decade, 6, 0.8)):
        if lag >= len(ss):
            continue
        dw = np.linalg.norm(ws[lag:] - ws[:-lag], axis=1)
        ds = ss[lag:] - ss[:-lag]
        smid = np.sqrt(ss[:-lag] * ss[lag:])
        nmid = nz[:-lag] + nz[lag:]
        good = dw > 3.0 * nmid * wscale
        if np.count_nonzero(good) >= min_good and \
                math.log10(float(smid[good].max() / smid[good].min())) >= min_span:
            coef = np.polyfit(np.log(smid[good]), np.log(dw[good] / ds[good]), 1)
            eps_hat = float(coef[0]) + 1.0
            break

    if eps_hat is None:
        # Both difference probes drowned.  Scan candidate exponents with
        # weighted least squares and keep the best one only when it beats
        # the constant-only model decisively.  Exponents whose basis moves
        # by less than a factor of 3 across the window are degenerate with
        # the constant and excluded, else the fit trades the constant off
        # against a nearly flat power and wanders.  With no admissible
        # winner the correction is not measurable and the weighted-mean
        # fallback below applies.
        eps_lo = math.log10(3.0) / max(span_decades, 1e-9)
        rt = np.sqrt(1.0 / (nz * wscale) ** 2)[:, None]
        resid0 = (ws - (ws * rt ** 2).sum(axis=0) / (rt ** 2).sum()) * rt
        ssr0 = float((resid0 ** 2).sum())
        best_ssr = ssr0
        for cand in np.arange(0.05, 3.01, 0.05):
            if cand < eps_lo:
                continue
            basis = np.column_stack([np.ones_like(ss), ss ** cand]) * rt
            coefs, *_ = np.linalg.lstsq(basis, ws * rt, rcond=None)
            ssr = float(((basis @ coefs - ws * rt) ** 2).sum())
            if ssr < best_ssr:
                best_ssr = ssr
                eps_hat = float(cand)
        if eps_hat is not None and best_ssr > 0.5 * ssr0:
            eps_hat = None

    if eps_hat is not None and eps_hat > 1e-3:
        xi_fit = None
        for _ in range(3):
            basis = np.column_stack([np.ones_like(sw), sw ** eps_hat])
            coefs, *_ = np.linalg.lstsq(basis, w, rcond=None)
            xi_fit = coefs[0]
            d = np.linalg.norm(w - xi_fit, axis=1)
            slope, _, above = _slope_or_sentinel(tw, d, T_star, wscale, noise)
            if not above or not math.isfinite(slope) \
                    or abs(slope - eps_hat) <= 0.01 or slope <= 1e-3:
                break
            eps_hat = slope
        return xi_fit

    # short-window fallback: subtract the smallest-countdown sample, fit
    # the residual decay, refit the constant on that basis
    xi_fit = ws[0].copy()
    refined = False
    for _ in range(3):
        d = np.linalg.norm(w - xi_fit, axis=1)
        slope, _, above = _slope_or_sentinel(tw, d, T_star, wscale, noise)
        if not above:
            if not refined:
                weights = 1.0 / noise ** 2
                xi_fit = (w * weights[:, None]).sum(axis=0) / weights.sum()
            break
        if slope <= 1e-3:
            break
        basis = np.column_stack([np.ones_like(sw), sw ** slope])
        coefs, *_ = np.linalg.lstsq(basis, w, rcond=None)
        xi_fit = coefs[0]
        refined = True
    return xi_fit


def _slope_or_sentinel(tw, d, T_star, scale, noise_rel):
    """Fit a decay slope, or report the +inf sentinel below the noise floor.

    ``noise_rel`` is the per-sample relative noise floor; only samples with
    d clear of 4x their floor enter the fit.  Returns (slope, r2,
    above_noise); slope is +inf when the residual is noise across the
    window or too few points survive the mask.
    """
    above = d > 4.0 * noise_rel * scale
    if np.count_nonzero(above) < 10:
        return math.inf, 1.0, False
    sa = T_star - tw[above]
    if math.log10(float(sa.max()) / float(sa.min())) < 1.5:
        return math.inf, 1.0, False
    slope, _, r2 = fit_power_law(np.column_stack([tw[above], d[above]]), T_star)
    return slope, r2, True


def estimate_profile(
    traj: Trajectory,
    T_star: float,
    sd: SpectralData,
    Lambda: float,
    H: HomogeneousFn,
    fit_decades: float = 2.0,
) -> AsymptoticProfile:
    """Fit xi* and the correction exponents over the terminal window.

    ``H`` must be the homogeneous factor in the coordinates of ``sd.matrix``
    (the original ones), whatever frame the trajectory is in: the residual
    alpha Lambda H(xi*) - 1 is evaluated after pulling xi* back.  T_star
    must come from this same trajectory (see the module docstring).
    """
    _require_symmetric_frame(traj, sd)
    alpha = traj.alpha
    win, s = _fit_window(traj, T_star, fit_decades)
    tw = traj.t[win]
    sw = s[win]
    yw = traj.y[win]

    if traj.coordinate_frame == "z_coordinates":
        P = sd.selector(Lambda)
    else:
        P = sd.projection(Lambda)
    Py = yw @ P.T
    comp = yw - Py

    yscale = float(np.max(np.linalg.norm(yw, axis=1)))
    if float(np.max(np.linalg.norm(Py, axis=1))) < _NOISE_REL * yscale:
        raise DegenerateProjection(
            "projection of the trajectory onto the identified eigenspace "
            "is below noise across the fit window"
        )

    noise = _sample_noise(traj, T_star, sw)

    # constant-plus-power regression for xi*: w(s) = xi + c s^eps + ...
    w = Py / sw[:, None] ** (1.0 / alpha)
    wscale = float(np.max(np.abs(w)))
    xi_fit = _fit_constant_plus_power(tw, sw, w, noise, wscale, T_star)

    d = np.linalg.norm(w - xi_fit, axis=1)
    eps_ry, r2_ry, ry_above = _slope_or_sentinel(tw, d, T_star, wscale, noise)
    if ry_above and r2_ry < 0.99:
        raise FitRejected(
            f"profile correction fit has R^2 = {r2_ry:.4f} over the window"
        )

    # the decaying-component magnitudes sit on the y scale, where the
    # countdown cancellation enters through the s^{1/alpha} comparison
    dn = np.linalg.norm(comp, axis=1)
    slope_ir, r2_ir, ir_above = _slope_or_sentinel(tw, dn, T_star, yscale, noise)
    eps_ir = slope_ir - 1.0 / alpha if ir_above else math.inf

    resid = yw - sw[:, None] ** (1.0 / alpha) * xi_fit
    dm = np.linalg.norm(resid, axis=1)
    slope_main, r2_main, main_above = _slope_or_sentinel(
        tw, dm, T_star, yscale, noise
    )
    eps_main = slope_main - 1.0 / alpha if main_above else math.inf

    if traj.coordinate_frame == "z_coordinates" and not sd.is_symmetric:
        xi_star = sd.transform_inv @ xi_fit
    else:
        xi_star = xi_fit.copy()
    nxi = float(np.linalg.norm(xi_star))
    if nxi == 0.0:
        raise DegenerateProjection("fitted xi* vanished")
    v_star = xi_star / nxi
    residual_xiHA = abs(alpha * Lambda * H(xi_star) - 1.0)
    eigvec_residual = float(
        np.linalg.norm(sd.matrix @ xi_star - Lambda * xi_star) / nxi
    )

    return AsymptoticProfile(
        Lambda=float(Lambda),
        xi_star=xi_star,
        v_star=v_star,
        alpha=alpha,
        eps_main=float(eps_main),
        eps_ir=float(eps_ir),
        eps_ry=float(eps_ry),
        residual_xiHA=float(residual_xiHA),
        fit_quality={"ry": r2_ry, "ir": r2_ir, "main": r2_main},
        frame="original",
        T_star=float(T_star),
        eigvec_residual=eigvec_residual,
        xi_star_fit=xi_fit,
        fit_frame=traj.coordinate_frame,
    )


def verify_main_theorem(
    profile: AsymptoticProfile, traj: Trajectory, H: HomogeneousFn
) -> VerificationReport:
    """Evaluate the four asymptotic clauses against one run.

    (i) the normalization alpha Lambda H(xi*) = 1; (ii) strictly positive
    correction exponents at desk resolution; (iii) xi* is an eigenvector;
    (iv) the direction v(t) approaches v* at a positive rate.
    """
    alpha = profile.alpha
    res_xiHA = abs(alpha * profile.Lambda * H(profile.xi_star) - 1.0)
    c1 = ClauseCheck("normalization_xiHA", res_xiHA <= 1e-3,
                     float(res_xiHA), 1e-3, "<=")

    worst = min(profile.eps_main, profile.eps_ir, profile.eps_ry)
    c2 = ClauseCheck("correction_exponents", worst >= 0.01,
                     float(worst), 0.01, ">=")

    c3 = ClauseCheck("eigenvector_residual", profile.eigvec_residual <= 1e-6,
                     float(profile.eigvec_residual), 1e-6, "<=")

    v_fit = profile.xi_star_fit / np.linalg.norm(profile.xi_star_fit)
    try:
        win, s = _fit_window(traj, profile.T_star, fit_decades=2.0)
        dv = np.linalg.norm(traj.v[win] - v_fit, axis=1)
        noise = _sample_noise(traj, profile.T_star, s[win])
        slope_v, _, above = _slope_or_sentinel(
            traj.t[win], dv, profile.T_star, 1.0, noise
        )
        measured_v = slope_v if above else math.inf
    except InsufficientSamples:
        measured_v = math.nan
    c4 = ClauseCheck("direction_convergence",
                     bool(measured_v >= 0.01) if not math.isnan(measured_v) else False,
                     float(measured_v), 0.01, ">=")

    clauses = (c1, c2, c3, c4)
    return VerificationReport(
        passed=all(c.passed for c in clauses),
        clauses=clauses,
        Lambda=profile.Lambda,
        alpha=alpha,
    )
