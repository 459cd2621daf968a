"""Experiment configuration: strict parsing, validation and assembly.

Configs are JSON documents.  Parsing is deliberately unforgiving: unknown
keys are rejected with their full field path, matrix/H/y0 carry no
defaults, and every number is checked before anything heavier runs.  The
canonical serialization of the parsed config (defaults applied, keys
sorted) is hashed into the run provenance, so two configs that normalize
identically share a hash.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    IntegratorOptions,
    PerturbationSpec,
    SystemSpec,
    bounded_perturbation,
    custom_perturbation,
    no_perturbation,
)
from .errors import ConfigInvalid, ExtlabError
from .expressions import compile_time_field
from .spectral import validate_and_decompose
from .homog import (
    HomogeneousFn,
    egs_a1,
    egs_a2,
    egs_c,
    from_expression,
    power_norm,
    weighted_pnorm,
)

__all__ = ["ExperimentConfig", "parse_config", "load_config", "config_hash"]

_SCHEMES = ("desingularized", "direct", "reference")
_PERT_KINDS = ("none", "bounded", "expression")

# catalog entries with an intrinsic homogeneity degree pin config alpha
_FIXED_ALPHA = {"egs_a1": 12.0, "egs_a2": 1.0 / 16.0, "egs_c": 0.5}


@dataclass(frozen=True)
class ExperimentConfig:
    matrix: tuple
    h_spec: dict
    alpha: float
    y0: tuple
    perturbation: dict
    t0: float = 0.0
    scheme: str = "desingularized"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    rho_floor: float = 1e-10
    max_steps: int = 1_000_000
    tail_fraction: float = 0.25
    fit_decades: float = 2.0
    seed: int = 0
    _normalized: dict = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.y0)

    def matrix_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    def y0_array(self) -> np.ndarray:
        return np.array(self.y0, dtype=float)

    def integrator_options(self) -> IntegratorOptions:
        return IntegratorOptions(
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            rho_floor=self.rho_floor,
            max_steps=self.max_steps,
        )

    def build_h(self) -> HomogeneousFn:
        return _build_h(self.h_spec, self.alpha, self.n, self.seed)

    def build_perturbation(self) -> PerturbationSpec:
        return _build_perturbation(self.perturbation, self.alpha, self.n)

    def build_system(self) -> SystemSpec:
        from .spectral import validate_and_decompose

        sd = validate_and_decompose(self.matrix_array())
        return SystemSpec(sd=sd, H=self.build_h(), pert=self.build_perturbation())


def _reject_unknown(d: dict, allowed: set, path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigInvalid(f"{path}.{k}" if path else k, "unknown field")


def _real(value, path: str, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(path, f"expected a real number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigInvalid(path, "must be finite")
    if positive and v <= 0:
        raise ConfigInvalid(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigInvalid(path, f"must be nonnegative, got {v}")
    return v


def _integer(value, path: str, positive=False) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalid(path, f"expected an integer, got {value!r}")
    if positive and value <= 0:
        raise ConfigInvalid(path, f"must be positive, got {value}")
    return value


def _real_vector(value, path: str) -> tuple:
    if not isinstance(value, list) or not value:
        raise ConfigInvalid(path, "expected a nonempty list of reals")
    return tuple(_real(v, f"{path}[{i}]") for i, v in enumerate(value))


def parse_config(doc: dict, source: str = "config") -> ExperimentConfig:
    """Validate a raw JSON document into an ExperimentConfig."""
    if not isinstance(doc, dict):
        raise ConfigInvalid(source, "top level must be an object")
    allowed = {
        "matrix", "h_spec", "alpha", "perturbation", "y0", "t0",
        "integrator", "analysis", "seed",
    }
    _reject_unknown(doc, allowed, "")

    for req in ("matrix", "h_spec", "alpha", "y0"):
        if req not in doc:
            raise ConfigInvalid(req, "required field missing")

    mat = doc["matrix"]
    if not isinstance(mat, list) or not mat:
        raise ConfigInvalid("matrix", "expected a nonempty list of rows")
    n = len(mat)
    rows = []
    for i, row in enumerate(mat):
        if not isinstance(row, list) or len(row) != n:
            raise ConfigInvalid(f"matrix[{i}]", f"expected a row of length {n}")
        rows.append(tuple(_real(v, f"matrix[{i}][{j}]") for j, v in enumerate(row)))
    matrix = tuple(rows)
    try:
        validate_and_decompose(np.array(matrix, dtype=float))
    except ExtlabError as exc:
        raise ConfigInvalid("matrix", str(exc)) from exc

    alpha = _real(doc["alpha"], "alpha", positive=True)
    y0 = _real_vector(doc["y0"], "y0")
    if len(y0) != n:
        raise ConfigInvalid("y0", f"length {len(y0)} does not match matrix size {n}")
    if all(v == 0.0 for v in y0):
        raise ConfigInvalid("y0", "must be nonzero")

    h_spec = _parse_h_spec(doc["h_spec"], alpha, n)
    pert = _parse_perturbation(doc.get("perturbation", {"kind": "none"}), n)
    t0 = _real(doc.get("t0", 0.0), "t0")

    integ = doc.get("integrator", {})
    if not isinstance(integ, dict):
        raise ConfigInvalid("integrator", "expected an object")
    _reject_unknown(
        integ, {"scheme", "rel_tol", "abs_tol", "rho_floor", "max_steps"},
        "integrator",
    )
    scheme = integ.get("scheme", "desingularized")
    if scheme not in _SCHEMES:
        raise ConfigInvalid("integrator.scheme", f"must be one of {_SCHEMES}")
    rel_tol = _real(integ.get("rel_tol", 1e-9), "integrator.rel_tol", positive=True)
    abs_tol = _real(integ.get("abs_tol", 1e-12), "integrator.abs_tol", positive=True)
    rho_floor = _real(
        integ.get("rho_floor", 1e-10), "integrator.rho_floor", positive=True
    )
    if rho_floor >= 1.0:
        raise ConfigInvalid("integrator.rho_floor", "must be below 1 (relative)")
    max_steps = _integer(integ.get("max_steps", 1_000_000),
                         "integrator.max_steps", positive=True)

    ana = doc.get("analysis", {})
    if not isinstance(ana, dict):
        raise ConfigInvalid("analysis", "expected an object")
    _reject_unknown(ana, {"tail_fraction", "fit_decades"}, "analysis")
    tail_fraction = _real(ana.get("tail_fraction", 0.25),
                          "analysis.tail_fraction", positive=True)
    if tail_fraction > 0.5:
        raise ConfigInvalid("analysis.tail_fraction", "must be at most 0.5")
    fit_decades = _real(ana.get("fit_decades", 2.0),
                        "analysis.fit_decades", positive=True)
    seed = _integer(doc.get("seed", 0), "seed")

    normalized = {
        "matrix": [list(r) for r in matrix],
        "h_spec": h_spec,
        "alpha": alpha,
        "perturbation": pert,
        "y0": list(y0),
        "t0": t0,
        "integrator": {
            "scheme": scheme, "rel_tol": rel_tol, "abs_tol": abs_tol,
            "rho_floor": rho_floor, "max_steps": max_steps,
        },
        "analysis": {"tail_fraction": tail_fraction, "fit_decades": fit_decades},
        "seed": seed,
    }

    cfg = ExperimentConfig(
        matrix=matrix, h_spec=h_spec, alpha=alpha, y0=y0, perturbation=pert,
        t0=t0, scheme=scheme, rel_tol=rel_tol, abs_tol=abs_tol,
        rho_floor=rho_floor, max_steps=max_steps, tail_fraction=tail_fraction,
        fit_decades=fit_decades, seed=seed, _normalized=normalized,
    )
    # fail now, with a field path, rather than deep inside a run
    try:
        cfg.build_h()
    except ConfigInvalid:
        raise
    except ExtlabError as exc:
        raise ConfigInvalid("h_spec", str(exc)) from exc
    try:
        cfg.build_perturbation()
    except ConfigInvalid:
        raise
    except ExtlabError as exc:
        raise ConfigInvalid("perturbation", str(exc)) from exc
    return cfg


def _parse_h_spec(spec, alpha: float, n: int) -> dict:
    if not isinstance(spec, dict):
        raise ConfigInvalid("h_spec", "expected an object")
    has_catalog = "catalog" in spec
    has_expr = "expression" in spec
    if has_catalog == has_expr:
        raise ConfigInvalid(
            "h_spec", "exactly one of 'catalog' or 'expression' is required"
        )
    if has_expr:
        _reject_unknown(spec, {"expression"}, "h_spec")
        if not isinstance(spec["expression"], str) or not spec["expression"].strip():
            raise ConfigInvalid("h_spec.expression", "expected an expression string")
        return {"expression": spec["expression"]}

    _reject_unknown(spec, {"catalog", "params"}, "h_spec")
    name = spec["catalog"]
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("h_spec.params", "expected an object")

    if name == "power_norm":
        _reject_unknown(params, {"a"}, "h_spec.params")
        a = _real(params.get("a", 1.0), "h_spec.params.a", positive=True)
        return {"catalog": name, "params": {"a": a}}
    if name == "weighted_pnorm":
        _reject_unknown(params, {"weights", "p"}, "h_spec.params")
        if "weights" not in params or "p" not in params:
            raise ConfigInvalid("h_spec.params", "weights and p are required")
        w = _real_vector(params["weights"], "h_spec.params.weights")
        if len(w) != n:
            raise ConfigInvalid(
                "h_spec.params.weights", f"length {len(w)} does not match n = {n}"
            )
        if any(v <= 0 for v in w):
            raise ConfigInvalid("h_spec.params.weights", "must be positive")
        p = _real(params["p"], "h_spec.params.p", positive=True)
        return {"catalog": name, "params": {"weights": list(w), "p": p}}
    if name in _FIXED_ALPHA:
        _reject_unknown(params, set(), "h_spec.params")
        fixed = _FIXED_ALPHA[name]
        if abs(alpha - fixed) > 1e-12:
            raise ConfigInvalid(
                "alpha", f"catalog entry {name} has degree -{fixed:g}; "
                f"alpha must equal {fixed:g}, got {alpha:g}"
            )
        if name in ("egs_a1", "egs_a2") and n != 2:
            raise ConfigInvalid("matrix", f"catalog entry {name} is planar (n = 2)")
        return {"catalog": name, "params": {}}
    raise ConfigInvalid("h_spec.catalog", f"unknown catalog entry {name!r}")


def _parse_perturbation(spec, n: int) -> dict:
    if not isinstance(spec, dict):
        raise ConfigInvalid("perturbation", "expected an object")
    _reject_unknown(spec, {"kind", "params", "expression"}, "perturbation")
    kind = spec.get("kind", "none")
    if kind not in _PERT_KINDS:
        raise ConfigInvalid("perturbation.kind", f"must be one of {_PERT_KINDS}")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("perturbation.params", "expected an object")

    if kind == "none":
        _reject_unknown(params, set(), "perturbation.params")
        if "expression" in spec:
            raise ConfigInvalid("perturbation.expression",
                                "not allowed for kind 'none'")
        return {"kind": "none", "params": {}}

    if kind == "bounded":
        _reject_unknown(params, {"M", "delta", "omega", "phase"},
                        "perturbation.params")
        if "M" not in params or "delta" not in params:
            raise ConfigInvalid("perturbation.params", "M and delta are required")
        out = {
            "M": _real(params["M"], "perturbation.params.M", positive=True),
            "delta": _real(params["delta"], "perturbation.params.delta",
                           positive=True),
            "omega": _real(params.get("omega", 1.0), "perturbation.params.omega"),
            "phase": _real(params.get("phase", 0.0), "perturbation.params.phase"),
        }
        if "expression" in spec:
            raise ConfigInvalid("perturbation.expression",
                                "not allowed for kind 'bounded'")
        return {"kind": "bounded", "params": out}

    # expression kind: component list, optional certificate constants
    expr = spec.get("expression")
    if not isinstance(expr, list) or len(expr) != n \
            or not all(isinstance(e, str) and e.strip() for e in expr):
        raise ConfigInvalid(
            "perturbation.expression",
            f"expected a list of {n} component expression strings"
        )
    _reject_unknown(params, {"M", "delta", "c_star", "r_star"},
                    "perturbation.params")
    out = {}
    for key in ("M", "delta", "c_star", "r_star"):
        if key in params:
            out[key] = _real(params[key], f"perturbation.params.{key}",
                             positive=True)
    return {"kind": "expression", "params": out, "expression": list(expr)}


def _build_h(h_spec: dict, alpha: float, n: int, seed: int) -> HomogeneousFn:
    if "expression" in h_spec:
        return from_expression(h_spec["expression"], alpha, n, check_seed=seed)
    name = h_spec["catalog"]
    params = h_spec["params"]
    if name == "power_norm":
        return power_norm(params["a"], alpha, n, check_seed=seed)
    if name == "weighted_pnorm":
        return weighted_pnorm(params["weights"], params["p"], alpha,
                              check_seed=seed)
    if name == "egs_a1":
        return egs_a1(check_seed=seed)
    if name == "egs_a2":
        return egs_a2(check_seed=seed)
    if name == "egs_c":
        return egs_c(n=n, check_seed=seed)
    raise ConfigInvalid("h_spec.catalog", f"unknown catalog entry {name!r}")


def _build_perturbation(pert: dict, alpha: float, n: int) -> PerturbationSpec:
    kind = pert["kind"]
    if kind == "none":
        return no_perturbation()
    p = pert["params"]
    if kind == "bounded":
        return bounded_perturbation(
            M=p["M"], delta=p["delta"], alpha=alpha, n=n,
            omega=p["omega"], phase=p["phase"],
        )
    ev = compile_time_field(pert["expression"], n)
    return custom_perturbation(
        ev, M=p.get("M"), delta=p.get("delta"),
        c_star=p.get("c_star"), r_star=p.get("r_star"),
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(path), f"not valid JSON: {exc}") from exc
    return parse_config(doc, source=str(path))


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical (defaults-applied, key-sorted) config JSON."""
    canon = json.dumps(cfg._normalized, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
