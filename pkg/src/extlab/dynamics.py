"""Extinction dynamics: y' = -H(y) A y + f(t, y) integrated to the density floor.

Two complementary schemes are provided.  The direct scheme integrates the
equation as written and relies on adaptive step contraction near the
extinction time.  The desingularized scheme changes clock to d tau = H(y) dt
and evolves (rho, v, t) with rho = |y|^alpha and v = y/|y|; in that clock the
density obeys d rho/d tau = -alpha lambda(v) rho exactly when f = 0, so the
approach to extinction becomes a plain exponential decay and the direction
dynamics a smooth flow on the sphere.  Internally the density is carried as
u = log rho, which keeps relative accuracy uniform over the ten or more
decades a run covers; the samples expose rho itself.

Both schemes integrate in the symmetric frame when the system matrix is not
symmetric: the state is pushed through z = S y, the coefficient becomes
H(S^{-1} z), and outputs are pulled back.  The recorded lambda column is
always the symmetric-frame Dirichlet quotient, which is the quantity with a
monotonicity structure worth plotting.

Stepping uses the Dormand-Prince 5(4) embedded pair with a PI controller.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    ExtlabError,
    MissingBoundConstants,
    NonfiniteState,
    StepSizeUnderflow,
    TailEstimateDiverged,
)
from .homog import HomogeneousFn, compose_linear, sphere_extrema
from .spectral import SpectralData, validate_and_decompose

__all__ = [
    "PerturbationSpec",
    "SystemSpec",
    "IntegratorOptions",
    "Trajectory",
    "no_perturbation",
    "bounded_perturbation",
    "custom_perturbation",
    "rhs",
    "integrate_direct",
    "integrate_desingularized",
    "extinction_radius",
    "to_symmetric_frame",
    "transformed_system",
]

log = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau.  Rows of _A are the stage coupling
# coefficients; _B5 is the fifth-order solution, _E the difference between
# the fifth- and fourth-order weights used for the error estimate.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


@dataclass(frozen=True)
class PerturbationSpec:
    """Forcing term f(t, y) with its smallness certificate.

    kind is one of "none", "bounded_builtin", "custom".  M and delta
    certify |f(t, y)| <= M |y|^(1 - alpha + delta); c_star and r_star feed
    the small-data radius computation (c_star defaults to M there).
    """

    kind: str
    evaluator: Callable[[float, np.ndarray], np.ndarray] | None = None
    M: float | None = None
    delta: float | None = None
    c_star: float | None = None
    r_star: float | None = None

    @property
    def active(self) -> bool:
        return self.kind != "none"


def no_perturbation() -> PerturbationSpec:
    return PerturbationSpec(kind="none")


def bounded_perturbation(
    M: float,
    delta: float,
    alpha: float,
    n: int,
    omega: float = 1.0,
    phase: float = 0.0,
) -> PerturbationSpec:
    """Built-in forcing M |y|^(1-alpha+delta) u(t) with u a rotating unit vector.

    Saturates the certified bound by construction, which makes it the
    adversarial-but-admissible test forcing.
    """
    expo = 1.0 - alpha + delta

    def evaluator(t: float, y: np.ndarray) -> np.ndarray:
        ry = float(np.linalg.norm(y))
        if ry <= 1e-300:
            return np.zeros(n)
        mag = M * ry ** expo
        u = np.zeros(n)
        if n == 1:
            u[0] = math.sin(omega * t + phase)
        else:
            u[0] = math.cos(omega * t + phase)
            u[1] = math.sin(omega * t + phase)
        return mag * u

    return PerturbationSpec(
        kind="bounded_builtin",
        evaluator=evaluator,
        M=M,
        delta=delta,
        c_star=M,
        r_star=math.inf,
    )


def custom_perturbation(
    evaluator: Callable[[float, np.ndarray], np.ndarray],
    M: float | None = None,
    delta: float | None = None,
    c_star: float | None = None,
    r_star: float | None = None,
) -> PerturbationSpec:
    return PerturbationSpec(
        kind="custom",
        evaluator=evaluator,
        M=M,
        delta=delta,
        c_star=c_star if c_star is not None else M,
        r_star=r_star,
    )


@dataclass
class SystemSpec:
    """A coefficient triple (A spectral data, H, perturbation), dimension-checked.

    When the perturbation carries (M, delta) the certified bound is
    spot-checked on seeded samples at construction; violations are logged
    and counted in ``pert_violations`` but do not block the run.
    """

    sd: SpectralData
    H: HomogeneousFn
    pert: PerturbationSpec
    pert_violations: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.sd.n != self.H.dimension:
            raise DimensionMismatch(
                f"matrix is {self.sd.n}x{self.sd.n} but H has dimension "
                f"{self.H.dimension}"
            )
        self._zsys_cache = None
        if self.pert.active and self.pert.M is not None and self.pert.delta is not None:
            self._check_pert_bound()

    @property
    def alpha(self) -> float:
        return self.H.alpha

    @property
    def n(self) -> int:
        return self.sd.n

    def _check_pert_bound(self):
        rng = np.random.default_rng(0)
        expo = 1.0 - self.alpha + self.pert.delta
        bad = 0
        for _ in range(24):
            d = rng.standard_normal(self.n)
            d /= np.linalg.norm(d)
            r = 10.0 ** rng.uniform(-4, 1)
            t = float(rng.uniform(0.0, 10.0))
            y = r * d
            norm_f = float(np.linalg.norm(self.pert.evaluator(t, y)))
            bound = self.pert.M * r ** expo + 1e-9
            if norm_f > bound:
                bad += 1
                log.warning(
                    "perturbation bound violated at |y|=%.3e, t=%.3f: "
                    "|f|=%.6e > %.6e", r, t, norm_f, bound,
                )
        self.pert_violations = bad


@dataclass(frozen=True)
class IntegratorOptions:
    """Tolerances and limits shared by both schemes.

    rho_floor is relative: the run stops once |y|^alpha falls below
    rho_floor * |y0|^alpha.  tau_max (desingularized clock budget) defaults
    to a safe multiple of the slowest admissible decay.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    rho_floor: float = 1e-10
    max_steps: int = 1_000_000
    tau_max: float | None = None
    # clock-step ceiling; None picks ln(10)/(10 alpha lambda_max) so the
    # terminal decades stay densely sampled for the power-law fits
    max_tau_step: float | None = None


@dataclass
class Trajectory:
    """Sampled run of one system from t0 down to the density floor.

    Arrays are aligned: t[i], y[i], rho[i] = |y[i]|^alpha, v[i] = y[i]/|y[i]|,
    and lam[i] the symmetric-frame Dirichlet quotient.  ``rho_floor`` is the
    termination threshold in the units of the sample frame.  t_star_est is a
    strict upper extrapolation of the last sample time; t_star_err brackets
    it using the sphere extrema of H and the certified forcing bound.
    """

    t: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    t0: float
    alpha: float
    t_star_est: float
    t_star_err: float
    stop_reason: str
    scheme: str
    coordinate_frame: str
    rho_floor: float
    # relative accuracy of the samples; downstream fits derive their noise
    # floor from this plus the countdown cancellation eps * T* / (T* - t)
    sample_tol: float = 1e-9

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return self.y.shape[1]


def rhs(sys: SystemSpec, t: float, y: np.ndarray) -> np.ndarray:
    """Right-hand side -H(y) A y + f(t, y); one H call, one matvec."""
    out = -sys.H(y) * (sys.sd.matrix @ y)
    if sys.pert.active:
        out = out + sys.pert.evaluator(t, y)
    return out


# --- embedded stepping machinery ---

def _error_norm(e, w_old, w_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(w_old), np.abs(w_new))
    scale = np.maximum(scale, 1e-300)
    r = e / scale
    val = math.sqrt(float(np.mean(r * r)))
    return val if math.isfinite(val) else math.inf


def _dp_step(f, t, w, h, k1):
    """One Dormand-Prince step.  Returns (w5, error_vector, k7).

    Any failure inside a trial stage (H blowing up at an overshoot point,
    exp overflow, a zero vector) is reported as a rejection, not an error:
    the controller will retry with a smaller step.
    """
    k = [k1]
    try:
        for i in range(1, 7):
            wi = w + h * sum(a * ki for a, ki in zip(_A[i], k))
            k.append(f(t + _C[i] * h, wi))
    except (ExtlabError, OverflowError, FloatingPointError, ValueError):
        return None, None, None
    K = np.array(k)
    if not np.all(np.isfinite(K)):
        return None, None, None
    w5 = w + h * (_B5 @ K)
    err = h * (_E @ K)
    return w5, err, k[6]


class _Controller:
    """PI step-size controller in the style of the classic dopri5 driver."""

    def __init__(self):
        self.facold = 1e-4
        self.rejected = False

    def after_accept(self, err):
        fac11 = max(err, 1e-10) ** 0.17
        fac = fac11 / self.facold ** 0.04
        fac = max(0.2, min(5.0, 0.9 / fac))
        if self.rejected:
            fac = min(fac, 1.0)
        self.rejected = False
        self.facold = max(err, 1e-4)
        return fac

    def after_reject(self, err):
        self.rejected = True
        if err is None or not math.isfinite(err):
            return 0.25
        return max(0.2, 0.9 * err ** -0.2)


def _initial_step(f, t0, w0, k1, rtol, atol):
    scale = atol + rtol * np.abs(w0)
    scale = np.maximum(scale, 1e-300)
    d0 = math.sqrt(float(np.mean((w0 / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((k1 / scale) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    w1 = w0 + h0 * k1
    k2 = f(t0 + h0, w1)
    d2 = math.sqrt(float(np.mean(((k2 - k1) / scale) ** 2))) / h0
    dm = max(d1, d2)
    h1 = (0.01 / dm) ** 0.2 if dm > 1e-15 else max(1e-6, h0 * 1e-3)
    return min(100.0 * h0, h1)


# --- frame helpers ---

@dataclass(frozen=True)
class TransformedSystem:
    """The z-frame companion of a nonsymmetric system."""

    sys: SystemSpec          # diagonal matrix, H(S^{-1} z), pushed forcing
    parent: SystemSpec


def _transformed_bound_constants(M, c_star, alpha, delta, S, S_inv):
    # certified bound constants survive the frame change with norm factors
    # depending on the sign of 1 - alpha + delta
    nS = float(np.linalg.norm(S))
    nSi = float(np.linalg.norm(S_inv))
    if 1.0 - alpha + delta >= 0.0:
        factor = nS * nSi ** (1.0 - alpha + delta)
    else:
        factor = nS ** (alpha - delta)
    Mt = M * factor if M is not None else None
    ct = c_star * factor if c_star is not None else None
    return Mt, ct


def transformed_system(sys: SystemSpec) -> TransformedSystem:
    """Build (and cache) the symmetric-frame companion system."""
    if sys._zsys_cache is not None:
        return sys._zsys_cache
    sd = sys.sd
    sd_z = validate_and_decompose(sd.diagonal, tol=sd.cluster_tol)
    Ht = compose_linear(sys.H, sd.transform_inv, name=f"{sys.H.name}~z")
    pert = sys.pert
    if pert.active:
        S = sd.transform
        S_inv = sd.transform_inv
        ev = pert.evaluator

        def evaluator(t, z):
            return S @ ev(t, S_inv @ z)

        Mt, ct = _transformed_bound_constants(
            pert.M, pert.c_star, sys.alpha, pert.delta or 0.0, S, S_inv
        )
        rt = pert.r_star
        if rt is not None and math.isfinite(rt):
            rt = rt / float(np.linalg.norm(S_inv))
        pert_z = PerturbationSpec(
            kind="custom", evaluator=evaluator, M=Mt, delta=pert.delta,
            c_star=ct, r_star=rt,
        )
    else:
        pert_z = no_perturbation()
    zsys = SystemSpec(sd=sd_z, H=Ht, pert=pert_z)
    out = TransformedSystem(sys=zsys, parent=sys)
    sys._zsys_cache = out
    return out


def to_symmetric_frame(traj: Trajectory, sd: SpectralData) -> Trajectory:
    """Push a trajectory into the symmetric frame for analysis.

    Symmetric systems are already there; nonsymmetric samples are mapped
    through z = S y with rho, v and lambda recomputed.  The floor becomes
    the achieved terminal density when the run stopped on the floor, else a
    conservative norm bound.
    """
    if traj.coordinate_frame == "z_coordinates" or sd.is_symmetric:
        return traj
    S = sd.transform
    z = traj.y @ S.T
    rz = np.linalg.norm(z, axis=1)
    rho_z = rz ** traj.alpha
    v_z = z / rz[:, None]
    lam = np.einsum("ij,j,ij->i", v_z, np.diag(sd.diagonal), v_z)
    if traj.stop_reason == "extinction_floor":
        floor = float(rho_z[-1])
    else:
        floor = traj.rho_floor * float(np.linalg.norm(S, 2)) ** traj.alpha
    return replace(
        traj,
        y=z,
        rho=rho_z,
        lam=lam,
        v=v_z,
        coordinate_frame="z_coordinates",
        rho_floor=floor,
    )


# --- extinction time extrapolation shared by both schemes ---

def _tail_bracket(sys_frame: SystemSpec, rho_end, t_end, lam_end, Hv_end, t0, rtol):
    """Upper extrapolation of T* and an error bracket from rate bounds."""
    alpha = sys_frame.alpha
    c1, c2 = sphere_extrema(sys_frame.H)
    lam_lo = sys_frame.sd.lambda_min
    lam_hi = sys_frame.sd.lambda_max
    q = 0.0
    pert = sys_frame.pert
    if pert.active and pert.M is not None and pert.delta is not None:
        q = pert.M * rho_end ** (pert.delta / alpha)
    rate_best = alpha * lam_end * Hv_end
    rate_lo = alpha * (c1 * lam_lo - q)
    rate_hi = alpha * (c2 * lam_hi + q)
    if rate_lo <= 0.0 or not math.isfinite(rate_best) or rate_best <= 0.0:
        raise TailEstimateDiverged(
            f"cannot bracket the extinction tail: decay rate lower bound "
            f"{rate_lo:.3e} at rho={rho_end:.3e}"
        )
    t_est = t_end + rho_end / rate_best
    t_lo = t_end + rho_end / rate_hi
    t_hi = t_end + rho_end / rate_lo
    err = 0.5 * (t_hi - t_lo) + 200.0 * rtol * max(t_est - t0, 0.0)
    err += 100.0 * np.finfo(float).eps * max(abs(t_est), 1.0)
    return t_est, err


# --- direct scheme ---

def integrate_direct(
    sys: SystemSpec,
    y0: np.ndarray,
    t0: float = 0.0,
    opts: IntegratorOptions | None = None,
) -> Trajectory:
    """Integrate y' = -H(y) A y + f in the original clock down to the floor.

    Steps contract with the distance to extinction; the run terminates when
    |y|^alpha crosses the floor, the step budget runs out, or the step size
    underflows (returned with stop_reason "blowup" plus a warning, since a
    genuine blowup of H off the admissible cone looks exactly like this).
    """
    opts = opts or IntegratorOptions()
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (sys.n,):
        raise DimensionMismatch(f"y0 has shape {y0.shape}, expected ({sys.n},)")
    alpha = sys.alpha
    rho0 = float(np.linalg.norm(y0)) ** alpha
    floor = opts.rho_floor * rho0

    sym = sys.sd.is_symmetric
    if sym:
        A_quot = sys.sd.matrix
        frame_sys = sys
    else:
        zview = transformed_system(sys)
        frame_sys = zview.sys
        S = sys.sd.transform
        diag = np.diag(sys.sd.diagonal)

    def quotient(y):
        if sym:
            v = y / np.linalg.norm(y)
            return float(v @ (A_quot @ v)), v
        z = S @ y
        vz = z / np.linalg.norm(z)
        return float(np.sum(diag * vz * vz)), vz

    def f(t, y):
        return rhs(sys, t, y)

    ts, ys, rhos, lams = [t0], [y0.copy()], [rho0], []
    lam0, _ = quotient(y0)
    lams.append(lam0)

    t, y = t0, y0.copy()
    k1 = f(t, y)
    if not np.all(np.isfinite(k1)):
        raise NonfiniteState("right-hand side non-finite at the initial condition")
    h = _initial_step(f, t, y, k1, opts.rel_tol, opts.abs_tol)
    ctrl = _Controller()
    stop_reason = "max_steps"
    steps = 0

    if rho0 <= floor:
        stop_reason = "extinction_floor"
        steps = opts.max_steps  # skip the loop; degenerate start

    while steps < opts.max_steps:
        steps += 1
        w5, err_vec, k7 = _dp_step(f, t, y, h, k1)
        if w5 is None:
            h *= 0.25
            ctrl.rejected = True
            if _underflowed(h, t, t0):
                stop_reason = "blowup"
                break
            continue
        err = _error_norm(err_vec, y, w5, opts.rel_tol, opts.abs_tol)
        if err > 1.0:
            h *= ctrl.after_reject(err)
            if _underflowed(h, t, t0):
                stop_reason = "blowup"
                break
            continue
        t = t + h
        y = w5
        k1 = k7
        r = float(np.linalg.norm(y))
        rho = r ** alpha
        lam, _ = quotient(y)
        ts.append(t)
        ys.append(y.copy())
        rhos.append(rho)
        lams.append(lam)
        if rho <= floor:
            stop_reason = "extinction_floor"
            break
        h *= ctrl.after_accept(err)
        if _underflowed(h, t, t0):
            stop_reason = "blowup"
            break

    if stop_reason == "blowup":
        warnings.warn(
            "step size underflow before the density floor; returning the "
            "partial trajectory",
            StepSizeUnderflow,
        )

    t_arr = np.array(ts)
    y_arr = np.array(ys)
    rho_arr = np.array(rhos)
    lam_arr = np.array(lams)
    v_arr = y_arr / np.linalg.norm(y_arr, axis=1, keepdims=True)

    # tail extrapolation happens in the symmetric frame where the density
    # slope has a sign and a bracket
    y_end = y_arr[-1]
    if sym:
        rho_f = rho_arr[-1]
        v_f = v_arr[-1]
        lam_f = lam_arr[-1]
        Hv_f = sys.H(v_f)
    else:
        z_end = S @ y_end
        rz = np.linalg.norm(z_end)
        rho_f = rz ** alpha
        v_f = z_end / rz
        lam_f = float(np.sum(diag * v_f * v_f))
        Hv_f = frame_sys.H(v_f)
    t_star, t_err = _tail_bracket(
        frame_sys, rho_f, float(t_arr[-1]), lam_f, Hv_f, t0, opts.rel_tol
    )

    return Trajectory(
        t=t_arr, y=y_arr, rho=rho_arr, lam=lam_arr, v=v_arr,
        t0=t0, alpha=alpha, t_star_est=t_star, t_star_err=t_err,
        stop_reason=stop_reason, scheme="direct", coordinate_frame="original",
        rho_floor=floor, sample_tol=opts.rel_tol,
    )


def _underflowed(h, t, t0):
    return h < max(1e-16 * max(abs(t - t0), abs(t), 1e-12), 5e-16 * abs(t))


# --- desingularized scheme ---

def _desing_rhs_factory(frame_sys: SystemSpec):
    A = frame_sys.sd.matrix
    H = frame_sys.H
    pert = frame_sys.pert
    alpha = frame_sys.alpha
    n = frame_sys.n

    def f(tau, w):
        v = w[1:1 + n]
        nv = np.linalg.norm(v)
        v = v / nv
        Av = A @ v
        lam = float(v @ Av)
        Hv = H(v)
        rho = math.exp(w[0])
        du = -alpha * lam
        dv = -(Av - lam * v)
        dt = rho / Hv
        if pert.active:
            yy = rho ** (1.0 / alpha) * v
            fv = pert.evaluator(w[1 + n], yy)
            p = rho ** (1.0 - 1.0 / alpha)
            fdotv = float(fv @ v)
            du += alpha * p * fdotv / Hv
            dv = dv + p * (fv - fdotv * v) / Hv
        out = np.empty(n + 2)
        out[0] = du
        out[1:1 + n] = dv
        out[1 + n] = dt
        return out

    return f


def integrate_desingularized(
    sys: SystemSpec,
    y0: np.ndarray,
    t0: float = 0.0,
    opts: IntegratorOptions | None = None,
) -> Trajectory:
    """Integrate the desingularized (rho, v, t) system in the H-weighted clock.

    Nonsymmetric systems are pushed to the symmetric frame first and the
    samples pulled back on output, so the returned trajectory lives in the
    caller's coordinates either way.
    """
    opts = opts or IntegratorOptions()
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (sys.n,):
        raise DimensionMismatch(f"y0 has shape {y0.shape}, expected ({sys.n},)")

    sym = sys.sd.is_symmetric
    if sym:
        frame_sys = sys
        w_start = y0
    else:
        frame_sys = transformed_system(sys).sys
        w_start = sys.sd.transform @ y0

    traj_f = _desing_core(frame_sys, w_start, t0, opts)
    if sym:
        return traj_f

    # pull samples back to the original coordinates
    S_inv = sys.sd.transform_inv
    y = traj_f.y @ S_inv.T
    r = np.linalg.norm(y, axis=1)
    rho = r ** sys.alpha
    v = y / r[:, None]
    if traj_f.stop_reason == "extinction_floor":
        floor = float(rho[-1])
    else:
        floor = traj_f.rho_floor * float(np.linalg.norm(S_inv, 2)) ** sys.alpha
    return replace(
        traj_f, y=y, rho=rho, v=v, coordinate_frame="original", rho_floor=floor,
    )


def _desing_core(
    frame_sys: SystemSpec, y0: np.ndarray, t0: float, opts: IntegratorOptions
) -> Trajectory:
    alpha = frame_sys.alpha
    n = frame_sys.n
    r0 = float(np.linalg.norm(y0))
    rho0 = r0 ** alpha
    floor = opts.rho_floor * rho0
    u_floor = math.log(floor)

    if opts.tau_max is not None:
        tau_max = opts.tau_max
    else:
        # slowest admissible decay of u is alpha * lambda_min, plus headroom
        tau_max = 1.5 * (math.log(rho0) - u_floor) / (alpha * frame_sys.sd.lambda_min)
        tau_max += 5.0

    # cap the clock step for output density: the analysis fits want a
    # steady >= 10 samples per decade of rho even once the dynamics turn
    # exactly linear in u and the error controller would let h run away
    if opts.max_tau_step is not None:
        h_cap = opts.max_tau_step
    else:
        h_cap = math.log(10.0) / (10.0 * alpha * frame_sys.sd.lambda_max)

    f = _desing_rhs_factory(frame_sys)
    w = np.empty(n + 2)
    w[0] = math.log(rho0)
    w[1:1 + n] = y0 / r0
    w[1 + n] = t0

    A = frame_sys.sd.matrix

    def record(w):
        rho = math.exp(w[0])
        v = w[1:1 + n] / np.linalg.norm(w[1:1 + n])
        lam = float(v @ (A @ v))
        t = w[1 + n]
        return t, rho, v, lam

    tau = 0.0
    k1 = f(tau, w)
    if not np.all(np.isfinite(k1)):
        raise NonfiniteState("desingularized right-hand side non-finite at start")
    h = min(_initial_step(f, tau, w, k1, opts.rel_tol, opts.abs_tol), h_cap)
    ctrl = _Controller()

    ts, rhos, vs, lams = [], [], [], []
    t, rho, v, lam = record(w)
    ts.append(t); rhos.append(rho); vs.append(v); lams.append(lam)

    stop_reason = "max_steps"
    steps = 0
    while steps < opts.max_steps:
        steps += 1
        if tau + h > tau_max:
            h = tau_max - tau
            if h <= 0:
                stop_reason = "user"
                break
        w5, err_vec, k7 = _dp_step(f, tau, w, h, k1)
        if w5 is None:
            h *= 0.25
            ctrl.rejected = True
            if h < 1e-14 * max(1.0, tau):
                stop_reason = "blowup"
                break
            continue
        err = _error_norm(err_vec, w, w5, opts.rel_tol, opts.abs_tol)
        if err > 1.0:
            h *= ctrl.after_reject(err)
            if h < 1e-14 * max(1.0, tau):
                stop_reason = "blowup"
                break
            continue
        tau += h
        w = w5
        w[1:1 + n] /= np.linalg.norm(w[1:1 + n])
        k1 = f(tau, w)  # renormalized state; refresh the FSAL slope
        t, rho, v, lam = record(w)
        ts.append(t); rhos.append(rho); vs.append(v); lams.append(lam)
        if w[0] <= u_floor:
            stop_reason = "extinction_floor"
            break
        if tau >= tau_max:
            stop_reason = "user"
            break
        h = min(h * ctrl.after_accept(err), h_cap)
        # clamp the step so the floor crossing is not overshot by decades
        du = k1[0]
        if du < 0.0:
            h_land = 1.05 * (u_floor - w[0]) / du
            if h > h_land:
                h = h_land

    if stop_reason == "blowup":
        warnings.warn(
            "step size underflow in the desingularized clock; returning the "
            "partial trajectory",
            StepSizeUnderflow,
        )

    t_arr = np.array(ts)
    rho_arr = np.array(rhos)
    v_arr = np.array(vs)
    lam_arr = np.array(lams)
    y_arr = rho_arr[:, None] ** (1.0 / alpha) * v_arr

    Hv_end = frame_sys.H(v_arr[-1])
    t_star, t_err = _tail_bracket(
        frame_sys, float(rho_arr[-1]), float(t_arr[-1]), float(lam_arr[-1]),
        Hv_end, t0, opts.rel_tol,
    )

    return Trajectory(
        t=t_arr, y=y_arr, rho=rho_arr, lam=lam_arr, v=v_arr,
        t0=t0, alpha=alpha, t_star_est=t_star, t_star_err=t_err,
        stop_reason=stop_reason, scheme="desingularized",
        coordinate_frame="original" if frame_sys.sd.is_symmetric else "z_coordinates",
        rho_floor=floor, sample_tol=opts.rel_tol,
    )


# --- small-data extinction radius ---

def extinction_radius(sys: SystemSpec) -> tuple[float, float]:
    """Radius r0 and margin a0 certifying extinction of small data.

    a0 = c1 lambda_min / 2 in the symmetric frame; r0 solves
    c_star (2 r0)^delta = a0, capped by the perturbation's domain radius and
    mapped back through the frame norms when A is not symmetric.  An
    unperturbed system returns (inf, a0): every initial condition dies.
    """
    if sys.sd.is_symmetric:
        frame_sys = sys
        back = 1.0
    else:
        frame_sys = transformed_system(sys).sys
        back = 1.0 / float(np.linalg.norm(sys.sd.transform))
    c1, _ = sphere_extrema(frame_sys.H)
    a0 = 0.5 * c1 * frame_sys.sd.lambda_min
    pert = sys.pert
    if not pert.active:
        return math.inf, a0
    if pert.delta is None or (pert.c_star is None and pert.M is None):
        raise MissingBoundConstants(
            "perturbation carries no (c_star or M, delta) certificate; "
            "cannot compute a small-data radius"
        )
    c_star = pert.c_star if pert.c_star is not None else pert.M
    if not sys.sd.is_symmetric:
        _, c_star = _transformed_bound_constants(
            None, c_star, sys.alpha, pert.delta,
            sys.sd.transform, sys.sd.transform_inv,
        )
    r0 = 0.5 * (a0 / c_star) ** (1.0 / pert.delta)
    if pert.r_star is not None and math.isfinite(pert.r_star):
        r0 = min(r0, pert.r_star)
    return r0 * back, a0
