"""Positively homogeneous coefficient functions H of negative degree.

A function H is stored together with its declared degree -alpha and is
validated at construction by sampling the scaling identity
H(t x) = t^{-alpha} H(x).  The module also provides the quantities the
dynamics and analysis layers need from H: the sphere extrema
c1 <= H|_{S} <= c2, a sampled degree estimate for cross-checking declared
values, and a local Holder-continuity probe.

Catalog entries cover the norm-power family and three hand-built examples
with known degrees and known regularity behavior (one of them is Holder
but not Lipschitz along the axes, which the probe should detect).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    NonfiniteValue,
    NonpositiveValue,
    NotHomogeneous,
    SingularMatrix,
    ZeroVector,
)
from .expressions import compile_scalar_field

__all__ = [
    "HomogeneousFn",
    "DegreeEstimate",
    "HolderProbe",
    "estimate_degree",
    "sphere_extrema",
    "probe_holder",
    "compose_linear",
    "power_norm",
    "weighted_pnorm",
    "egs_a1",
    "egs_a2",
    "egs_c",
    "from_expression",
]

_HOMOGENEITY_RTOL = 1e-9


@dataclass(eq=False)
class HomogeneousFn:
    """A strictly positive function, positively homogeneous of degree -alpha.

    The evaluator is an arbitrary callable of one vector argument; the
    constructor spot-checks positivity and the scaling identity on seeded
    sphere samples and raises if either fails.  Instances are treated as
    immutable; ``sphere_stats`` is a lazily computed cache of (c1, c2).
    """

    evaluator: Callable[[np.ndarray], float]
    alpha: float
    name: str
    dimension: int
    sphere_stats: tuple[float, float] | None = field(default=None)
    check_seed: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise NonpositiveValue(f"alpha must be positive, got {self.alpha}")
        if self.dimension < 1:
            raise DimensionMismatch(f"dimension must be >= 1, got {self.dimension}")
        self._verify_on_samples()

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionMismatch(
                f"{self.name} expects a vector of length {self.dimension}, "
                f"got shape {x.shape}"
            )
        if float(np.linalg.norm(x)) <= 1e-300:
            raise ZeroVector(f"{self.name} evaluated at the origin")
        val = float(self.evaluator(x))
        if not math.isfinite(val):
            raise NonfiniteValue(f"{self.name}({x}) = {val}")
        return val

    def _verify_on_samples(self):
        rng = np.random.default_rng(self.check_seed)
        for _ in range(8):
            x = rng.standard_normal(self.dimension)
            x /= np.linalg.norm(x)
            base = float(self.evaluator(x))
            if not math.isfinite(base):
                raise NonfiniteValue(f"{self.name} non-finite on the unit sphere")
            if base <= 0.0:
                raise NonpositiveValue(
                    f"{self.name}({x}) = {base:.6g}; H must be positive"
                )
            for t in (1e-3, 0.1, 10.0, 1e3):
                expected = t ** (-self.alpha) * base
                got = float(self.evaluator(t * x))
                if abs(got - expected) > _HOMOGENEITY_RTOL * expected:
                    raise NotHomogeneous(
                        f"{self.name} violates the degree -{self.alpha} scaling "
                        f"at t={t}: H(tx)={got!r}, t^-a H(x)={expected!r}"
                    )


class DegreeEstimate(NamedTuple):
    beta: float            # estimated homogeneity degree (should be -alpha)
    max_deviation: float   # worst per-sample deviation from the mean


@dataclass(frozen=True)
class HolderProbe:
    """Result of a local Holder-continuity probe around a sphere point."""

    gamma_est: float
    C_est: float
    radii: np.ndarray
    envelope: np.ndarray   # max |H(x) - H(x0)| per radius
    r2: float
    degenerate: bool = False


def estimate_degree(
    fn: HomogeneousFn,
    samples: int = 16,
    t_range: np.ndarray | None = None,
    seed: int = 0,
) -> DegreeEstimate:
    """Estimate the homogeneity degree from scaling ratios.

    Averages log(H(t x)/H(x)) / log t over seeded sphere points and a log
    grid of scale factors.  For a genuinely homogeneous function every
    sample gives the same value to within rounding; a spread above 1e-6
    means the function is not homogeneous (or the evaluator is broken) and
    raises NotHomogeneous.
    """
    if t_range is None:
        t_range = np.logspace(-3, 3, 13)
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        x = rng.standard_normal(fn.dimension)
        x /= np.linalg.norm(x)
        base = fn(x)
        for t in t_range:
            t = float(t)
            if abs(math.log(t)) < 1e-9:
                continue
            vals.append(math.log(fn(t * x) / base) / math.log(t))
    vals = np.asarray(vals)
    beta = float(np.mean(vals))
    max_dev = float(np.max(np.abs(vals - beta)))
    if max_dev > 1e-6:
        raise NotHomogeneous(
            f"{fn.name}: scaling ratios spread {max_dev:.3e} over the sample; "
            f"not homogeneous of a single degree"
        )
    return DegreeEstimate(beta=beta, max_deviation=max_dev)


def _golden_minimize(f, a: float, b: float, rtol: float) -> tuple[float, float]:
    # golden-section on [a, b]; returns (argmin, min). Tolerates kinks.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    fbest_prev = min(f1, f2)
    while b - a > 1e-14:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        fbest = min(f1, f2)
        scale = max(abs(fbest), 1e-300)
        if abs(fbest - fbest_prev) <= 0.01 * rtol * scale and (b - a) < 1e-6:
            break
        fbest_prev = fbest
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _extrema_n2(fn: HomogeneousFn, resolution: int, rtol: float) -> tuple[float, float]:
    thetas = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
    g = np.array([fn(np.array([math.cos(t), math.sin(t)])) for t in thetas])
    step = 2.0 * math.pi / resolution

    def h(t):
        return fn(np.array([math.cos(t), math.sin(t)]))

    lo_i = int(np.argmin(g))
    hi_i = int(np.argmax(g))
    _, c1 = _golden_minimize(h, thetas[lo_i] - step, thetas[lo_i] + step, rtol)
    _, neg_c2 = _golden_minimize(
        lambda t: -h(t), thetas[hi_i] - step, thetas[hi_i] + step, rtol
    )
    return float(c1), float(-neg_c2)


def _sphere_samples(n: int, count: int, seed: int) -> np.ndarray:
    if n == 3:
        # Fibonacci lattice: even coverage without randomness
        i = np.arange(count) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((count, n))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def _refine_on_sphere(fn, x0: np.ndarray, rtol: float, sign: float) -> float:
    # coordinate descent with Givens rotations; sign=+1 minimizes, -1 maximizes
    x = x0.copy()
    best = sign * fn(x)
    n = len(x)
    width = 0.5
    for _ in range(60):
        improved_round = best
        for i in range(n):
            for j in range(i + 1, n):
                def slice_val(theta, i=i, j=j):
                    y = x.copy()
                    c, s = math.cos(theta), math.sin(theta)
                    yi, yj = y[i], y[j]
                    y[i] = c * yi - s * yj
                    y[j] = s * yi + c * yj
                    return sign * fn(y / np.linalg.norm(y))
                th, val = _golden_minimize(slice_val, -width, width, rtol)
                if val < best:
                    best = val
                    c, s = math.cos(th), math.sin(th)
                    xi, xj = x[i], x[j]
                    x[i] = c * xi - s * xj
                    x[j] = s * xi + c * xj
                    x /= np.linalg.norm(x)
        width = max(width * 0.5, 1e-8)
        scale = max(abs(best), 1e-300)
        if abs(improved_round - best) <= rtol * scale:
            break
    return sign * best


def sphere_extrema(
    fn: HomogeneousFn,
    resolution: int | None = None,
    seed: int = 0,
    rtol: float = 1e-6,
) -> tuple[float, float]:
    """Extrema (c1, c2) of H on the unit sphere, cached on the instance.

    Dense sampling locates candidate basins, then 1D golden-section (n=2)
    or Givens-rotation coordinate descent (n>=3) polishes them until
    successive values move by less than ``rtol`` relatively.
    """
    if fn.sphere_stats is not None:
        return fn.sphere_stats
    if fn.dimension == 1:
        c1 = min(fn(np.array([1.0])), fn(np.array([-1.0])))
        c2 = max(fn(np.array([1.0])), fn(np.array([-1.0])))
    elif fn.dimension == 2:
        res = resolution if resolution is not None else 256
        if res < 100:
            res = 100
        c1, c2 = _extrema_n2(fn, res, rtol)
    else:
        count = resolution if resolution is not None else (2048 if fn.dimension == 3 else 4096)
        pts = _sphere_samples(fn.dimension, count, seed)
        vals = np.array([fn(p) for p in pts])
        c1 = _refine_on_sphere(fn, pts[int(np.argmin(vals))], rtol, +1.0)
        c2 = _refine_on_sphere(fn, pts[int(np.argmax(vals))], rtol, -1.0)
    if c1 <= 0.0:
        raise NonpositiveValue(f"{fn.name}: sphere minimum {c1:.6g} <= 0")
    fn.sphere_stats = (float(c1), float(c2))
    return fn.sphere_stats


def probe_holder(
    fn: HomogeneousFn,
    x0: np.ndarray,
    k_range: tuple[int, int] = (4, 20),
    directions: int = 32,
    seed: int = 0,
) -> HolderProbe:
    """Probe local Holder continuity of H around a sphere point.

    For each radius 2^-k the probe records the upper envelope of
    |H(x) - H(x0)| over tangent perturbations, then fits the envelope
    against the actual displacements in log-log.  The exponent is capped
    at 1 so that symmetric points (where the envelope decays faster than
    linearly) do not produce a spurious superlinear estimate.
    """
    x0 = np.asarray(x0, dtype=float)
    nrm = float(np.linalg.norm(x0))
    if nrm <= 1e-300:
        raise ZeroVector("probe point at the origin")
    x0 = x0 / nrm
    base = fn(x0)
    rng = np.random.default_rng(seed)
    dirs = []
    while len(dirs) < directions:
        d = rng.standard_normal(fn.dimension)
        d -= (d @ x0) * x0
        ln = np.linalg.norm(d)
        if ln > 1e-12:
            dirs.append(d / ln)
    radii = 2.0 ** (-np.arange(k_range[0], k_range[1] + 1, dtype=float))
    dists = np.empty(len(radii))
    envelope = np.empty(len(radii))
    for i, r in enumerate(radii):
        best = 0.0
        dist_at_best = r
        for d in dirs:
            x = x0 + r * d
            x /= np.linalg.norm(x)
            diff = abs(fn(x) - base)
            if diff >= best:
                best = diff
                dist_at_best = float(np.linalg.norm(x - x0))
        envelope[i] = best
        dists[i] = dist_at_best
    if np.max(envelope) < 1e-14:
        return HolderProbe(
            gamma_est=1.0, C_est=0.0, radii=radii, envelope=envelope,
            r2=1.0, degenerate=True,
        )
    keep = envelope > 1e-14
    lx = np.log(dists[keep])
    ly = np.log(envelope[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    gamma = min(float(slope), 1.0)
    # envelope constant: smallest C with diff <= C dist^gamma on the probe data
    C = float(np.max(envelope[keep] / dists[keep] ** gamma))
    return HolderProbe(
        gamma_est=gamma, C_est=C, radii=radii, envelope=envelope, r2=r2,
    )


def compose_linear(fn: HomogeneousFn, K: np.ndarray, name: str | None = None) -> HomogeneousFn:
    """The function x -> H(K x) for invertible K; same degree as H."""
    K = np.asarray(K, dtype=float)
    if K.shape != (fn.dimension, fn.dimension):
        raise DimensionMismatch(
            f"K has shape {K.shape}, expected ({fn.dimension}, {fn.dimension})"
        )
    sv = np.linalg.svd(K, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularMatrix(
            f"composition matrix is numerically singular (sigma ratio "
            f"{sv[-1] / sv[0]:.3e})"
        )
    inner = fn.evaluator

    def evaluator(x: np.ndarray) -> float:
        return inner(K @ x)

    return HomogeneousFn(
        evaluator=evaluator,
        alpha=fn.alpha,
        name=name if name is not None else f"{fn.name}@lin",
        dimension=fn.dimension,
        check_seed=fn.check_seed,
    )


# --- catalog ---

def power_norm(a: float, alpha: float, n: int, check_seed: int = 0) -> HomogeneousFn:
    """H(x) = a |x|^-alpha, the isotropic model case."""
    if a <= 0:
        raise NonpositiveValue(f"coefficient a must be positive, got {a}")

    def evaluator(x):
        return a * float(np.linalg.norm(x)) ** (-alpha)

    fn = HomogeneousFn(evaluator, alpha, f"power_norm(a={a:g})", n, check_seed=check_seed)
    fn.sphere_stats = (a, a)
    return fn


def weighted_pnorm(
    weights, p: float, alpha: float, check_seed: int = 0
) -> HomogeneousFn:
    """H(x) = (sum_i w_i |x_i|^p)^(-alpha/p) with positive weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise NonpositiveValue("weights must all be positive")
    n = len(w)

    def evaluator(x):
        return float(np.sum(w * np.abs(x) ** p)) ** (-alpha / p)

    return HomogeneousFn(
        evaluator, alpha, f"weighted_pnorm(p={p:g})", n, check_seed=check_seed
    )


def egs_a1(check_seed: int = 0) -> HomogeneousFn:
    """H(x) = (x1^4 + 5 x2^4)^-3 on the plane; degree -12 by direct scaling."""

    def evaluator(x):
        return (x[0] ** 4 + 5.0 * x[1] ** 4) ** -3.0

    return HomogeneousFn(evaluator, 12.0, "egs_a1", 2, check_seed=check_seed)


def egs_a2(check_seed: int = 0) -> HomogeneousFn:
    """Nested-power example of degree -1/16.

    Both inner blocks are homogeneous of degree 1/2, so their sum raised
    to -1/8 scales with exponent -1/16.
    """

    def evaluator(x):
        a1 = np.abs(x[0])
        a2 = np.abs(x[1])
        inner1 = (3.0 * a1 ** 1.5 + a2 ** 1.5) ** (1.0 / 3.0)
        inner2 = (2.0 * a1 ** (5.0 / 3.0) + 7.0 * a2 ** (5.0 / 3.0)) ** 0.3
        return float((inner1 + inner2) ** -0.125)

    return HomogeneousFn(evaluator, 1.0 / 16.0, "egs_a2", 2, check_seed=check_seed)


def egs_c(n: int = 2, check_seed: int = 0) -> HomogeneousFn:
    """H(x) = (sum_i sqrt|x_i|) / |x|, degree -1/2; Holder 1/2 at the axes."""

    def evaluator(x):
        return float(np.sum(np.sqrt(np.abs(x))) / np.linalg.norm(x))

    return HomogeneousFn(evaluator, 0.5, "egs_c", n, check_seed=check_seed)


def from_expression(
    expression: str, alpha: float, n: int, check_seed: int = 0
) -> HomogeneousFn:
    """Build a catalog-equivalent function from a config expression string."""
    evaluator = compile_scalar_field(expression, n)
    return HomogeneousFn(
        evaluator, alpha, f"expr({expression})", n, check_seed=check_seed
    )
