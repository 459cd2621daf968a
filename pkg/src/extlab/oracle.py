"""Independent oracles the implementation is tested against.

Three routes that deliberately avoid the adaptive machinery in dynamics:

* the scalar closed form y(t) = y0 (1 - t/T*)^(1/alpha);
* the isotropic-system profile construction, which recovers xi* from a
  trajectory by quadrature of the correction integrals (the forced case
  reduces to variation of constants when A = I and H = a |x|^-alpha);
* a fixed-small-step integration of the desingularized system with step
  halving until two successive runs agree at matched clock checkpoints.

Keeping these routes separate from the production integrators is the point:
agreement between two independent computations is the evidence the rest of
the test suite leans on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import (
    PerturbationSpec,
    SystemSpec,
    Trajectory,
    _desing_rhs_factory,
    _tail_bracket,
    transformed_system,
)
from .errors import (
    BeyondExtinction,
    FrameMismatch,
    NoConvergence,
    NonpositiveValue,
    QuadratureNotConverged,
)

__all__ = [
    "scalar_closed_form",
    "extinction_time_scalar",
    "SpecialCaseProfile",
    "special_case_profile",
    "reference_integrate",
]


def extinction_time_scalar(a: float, alpha: float, y0: float) -> float:
    """T* = |y0|^alpha / (alpha a) for y' = -a |y|^(-alpha) y."""
    if a <= 0 or alpha <= 0:
        raise NonpositiveValue("a and alpha must be positive")
    return abs(y0) ** alpha / (alpha * a)


def scalar_closed_form(a: float, alpha: float, y0: float, t):
    """Exact scalar solution at time t (scalar or array), measured from t0 = 0."""
    t_star = extinction_time_scalar(a, alpha, y0)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr > t_star * (1.0 + 1e-12)):
        raise BeyondExtinction(
            f"requested t beyond the extinction time {t_star:.12g}"
        )
    base = np.clip(1.0 - t_arr / t_star, 0.0, None)
    out = y0 * base ** (1.0 / alpha)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


@dataclass(frozen=True)
class SpecialCaseProfile:
    """Profile data recovered from an isotropic (A = I) trajectory."""

    a: float
    alpha: float
    T_star: float
    J_star: float
    eta_star: np.ndarray
    xi_star: np.ndarray
    g_of_t: np.ndarray        # columns (t, g)
    achieved_tol: float


def _gauss_panels(lo: float, hi: float, panels: int):
    # 5-point Gauss-Legendre nodes/weights on uniform panels of [lo, hi]
    x, w = np.polynomial.legendre.leggauss(5)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return edges, nodes, weights


def special_case_profile(
    a: float,
    alpha: float,
    y0: np.ndarray,
    traj: Trajectory,
    pert: PerturbationSpec,
    tol: float = 1e-8,
    max_refinements: int = 12,
) -> SpecialCaseProfile:
    """Recover xi* from an A = I, H = a |x|^-alpha trajectory by quadrature.

    The correction g(t) is integrated backwards from the extinction time
    along the sampled trajectory; the logarithmic correction J2 and the
    weighted forcing integral eta* are then computed on a mesh graded by
    u = (T* - tau)^(delta/alpha), which absorbs the endpoint-singular
    factor (T* - tau)^(delta/alpha - 1) of both integrands.  The final
    sliver beyond the last sample is added in closed form from the local
    power law.  xi* = exp(-J*) ((T* - t0)^(-1/alpha) y0 + eta*).
    """
    if a <= 0 or alpha <= 0:
        raise NonpositiveValue("a and alpha must be positive")
    if abs(traj.alpha - alpha) > 1e-12:
        raise FrameMismatch(
            f"trajectory was run with alpha={traj.alpha}, oracle got {alpha}"
        )
    y0 = np.asarray(y0, dtype=float)
    T = traj.t_star_est
    t0 = traj.t0
    S0 = T - t0
    n = traj.n
    t = traj.t
    m = len(t)

    if not pert.active:
        g = np.zeros(m)
        xi = S0 ** (-1.0 / alpha) * y0
        return SpecialCaseProfile(
            a=a, alpha=alpha, T_star=T, J_star=0.0,
            eta_star=np.zeros(n), xi_star=xi,
            g_of_t=np.column_stack([t, g]), achieved_tol=0.0,
        )

    delta = pert.delta if pert.delta is not None else min(alpha, 1.0)
    beta = delta / alpha

    f_samples = np.array([pert.evaluator(ti, yi) for ti, yi in zip(t, traj.y)])
    r = np.linalg.norm(traj.y, axis=1)
    psi = r ** (alpha - 1.0) * np.einsum("ij,ij->i", f_samples, traj.v)

    # g(t) = -alpha [ int_t^{t_end} psi + tail ], tail from psi ~ s^beta
    Psi = PchipInterpolator(t, psi).antiderivative()
    s_end = T - t[-1]
    tail = psi[-1] * s_end / (1.0 + beta)
    Psi_end = float(Psi(t[-1]))

    def g_interp(tau):
        return -alpha * (Psi_end - Psi(tau) + tail)

    g = g_interp(t)
    rho_interp = PchipInterpolator(t, traj.rho)
    y_interp = PchipInterpolator(t, traj.y, axis=0)

    def h_of_tau(tau):
        s = T - tau
        return -g_interp(tau) / (alpha * s * rho_interp(tau))

    u_end = s_end ** beta
    U0 = S0 ** beta

    def compute(panels):
        edges, nodes, weights = _gauss_panels(u_end, U0, panels)
        taus = T - nodes ** (1.0 / beta)
        jac = nodes ** (1.0 / beta - 1.0) / beta
        hvals = h_of_tau(taus) * jac
        panel_J = np.sum(hvals * weights, axis=1)
        # J2(tau) grows from t0 (u = U0) toward T; accumulate from the top
        J2_edges = np.concatenate([[0.0], np.cumsum(panel_J[::-1])])[::-1]
        # sliver beyond the last sample: h ~ h_end (s/s_end)^(beta - 1)
        h_end = h_of_tau(t[-1])
        J_sliver = h_end * s_end / beta
        J_star = J2_edges[0] + J_sliver

        J2_interp = PchipInterpolator(edges, J2_edges)
        tau_flat = taus.ravel()
        s_flat = (T - tau_flat)
        fvals = np.array(
            [pert.evaluator(tv, y_interp(tv)) for tv in tau_flat]
        ).reshape(taus.shape + (n,))
        phi = (
            np.exp(J2_interp(nodes))[:, :, None]
            * (s_flat.reshape(taus.shape) ** (-1.0 / alpha))[:, :, None]
            * fvals
            * jac[:, :, None]
        )
        eta = np.sum(phi * weights[:, :, None], axis=(0, 1))
        f_last = pert.evaluator(t[-1], traj.y[-1])
        eta_sliver = (
            math.exp(J2_edges[0] + J_sliver)
            * s_end ** (-1.0 / alpha) * f_last * s_end / beta
        )
        eta = eta + eta_sliver
        return J_star, eta

    panels = 64
    J_prev, eta_prev = compute(panels)
    achieved = math.inf
    for _ in range(max_refinements):
        panels *= 2
        J_cur, eta_cur = compute(panels)
        scale = max(1.0, float(np.linalg.norm(eta_cur)))
        achieved = max(
            abs(J_cur - J_prev),
            float(np.linalg.norm(eta_cur - eta_prev)) / scale,
        )
        J_prev, eta_prev = J_cur, eta_cur
        if achieved <= tol:
            break
    else:
        raise QuadratureNotConverged(
            f"profile quadrature stalled at {achieved:.3e} after "
            f"{max_refinements} refinements (target {tol:.1e})"
        )

    xi = math.exp(-J_prev) * (S0 ** (-1.0 / alpha) * y0 + eta_prev)
    return SpecialCaseProfile(
        a=a, alpha=alpha, T_star=T, J_star=J_prev, eta_star=eta_prev,
        xi_star=xi, g_of_t=np.column_stack([t, g]), achieved_tol=achieved,
    )


def reference_integrate(
    sys: SystemSpec,
    y0: np.ndarray,
    t0: float = 0.0,
    tol: float = 1e-10,
    rho_floor: float = 1e-10,
    max_halvings: int = 12,
) -> Trajectory:
    """Fixed-step RK4 run of the desingularized system, step-halved to agreement.

    Successive runs must agree to ``tol`` at 65 matched clock checkpoints
    (sup over the log-density, direction and time components).  Slow by
    design; this is the independent cross-check, not the workhorse.
    """
    y0 = np.asarray(y0, dtype=float)
    sym = sys.sd.is_symmetric
    if sym:
        frame_sys = sys
        w0_vec = y0
    else:
        frame_sys = transformed_system(sys).sys
        w0_vec = sys.sd.transform @ y0

    alpha = frame_sys.alpha
    n = frame_sys.n
    r0 = float(np.linalg.norm(w0_vec))
    rho0 = r0 ** alpha
    floor = rho_floor * rho0
    u_floor = math.log(floor)
    u0 = math.log(rho0)
    tau_max = 1.2 * (u0 - u_floor) / (alpha * frame_sys.sd.lambda_min)

    f = _desing_rhs_factory(frame_sys)

    def run(N):
        h = tau_max / N
        w = np.empty(n + 2)
        w[0] = u0
        w[1:1 + n] = w0_vec / r0
        w[1 + n] = t0
        states = np.empty((N + 1, n + 2))
        states[0] = w
        tau = 0.0
        for i in range(N):
            k1 = f(tau, w)
            k2 = f(tau + 0.5 * h, w + 0.5 * h * k1)
            k3 = f(tau + 0.5 * h, w + 0.5 * h * k2)
            k4 = f(tau + h, w + h * k3)
            w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            w[1:1 + n] /= np.linalg.norm(w[1:1 + n])
            tau += h
            states[i + 1] = w
        return states

    N = 512
    prev = run(N)
    accepted = None
    for _ in range(max_halvings):
        N *= 2
        cur = run(N)
        idx_prev = np.arange(0, len(prev), len(prev) // 64)
        idx_cur = np.arange(0, len(cur), len(cur) // 64)
        d = np.abs(cur[idx_cur] - prev[idx_prev])
        tscale = max(1.0, abs(float(cur[-1, -1])))
        gap = max(
            float(np.max(d[:, 0])),
            float(np.max(d[:, 1:1 + n])),
            float(np.max(d[:, -1])) / tscale,
        )
        prev = cur
        if gap <= tol:
            accepted = cur
            break
    if accepted is None:
        raise NoConvergence(
            f"reference integration did not reach {tol:.1e} agreement in "
            f"{max_halvings} halvings"
        )

    # truncate at the floor crossing
    below = np.nonzero(accepted[:, 0] <= u_floor)[0]
    if len(below):
        accepted = accepted[: below[0] + 1]
        stop_reason = "extinction_floor"
    else:
        stop_reason = "user"

    u = accepted[:, 0]
    v = accepted[:, 1:1 + n]
    t = accepted[:, -1]
    rho = np.exp(u)
    A = frame_sys.sd.matrix
    lam = np.einsum("ij,jk,ik->i", v, A, v)
    y_frame = rho[:, None] ** (1.0 / alpha) * v

    Hv_end = frame_sys.H(v[-1])
    t_star, t_err = _tail_bracket(
        frame_sys, float(rho[-1]), float(t[-1]), float(lam[-1]), Hv_end,
        t0, tol,
    )
    t_err += tol

    traj = Trajectory(
        t=t, y=y_frame, rho=rho, lam=lam, v=v, t0=t0, alpha=alpha,
        t_star_est=t_star, t_star_err=t_err, stop_reason=stop_reason,
        scheme="reference", coordinate_frame="original" if sym else "z_coordinates",
        rho_floor=floor, sample_tol=tol,
    )
    if sym:
        return traj

    S_inv = sys.sd.transform_inv
    y_orig = y_frame @ S_inv.T
    r = np.linalg.norm(y_orig, axis=1)
    return replace(
        traj,
        y=y_orig,
        rho=r ** alpha,
        v=y_orig / r[:, None],
        coordinate_frame="original",
        rho_floor=float((r ** alpha)[-1]) if stop_reason == "extinction_floor"
        else floor * float(np.linalg.norm(S_inv, 2)) ** alpha,
    )
