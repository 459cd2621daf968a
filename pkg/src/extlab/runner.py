"""Experiment execution: config -> decompose -> integrate -> analyze -> verify.

run_experiment turns one validated config into a RunSummary and, when an
output directory is given, a fixed set of artifacts: trajectory.csv,
summary.json, verification.json, two plot-data CSVs and two rendered
figures.  Errors raised by the pipeline stages are captured into the
summary's status field with their stage label; only broken configs raise.

sweep executes many configs with a thread pool.  Runs are independent and
write to per-run directories; results come back in input order no matter
how the pool schedules them.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .analysis import (
    dirichlet_quotient_series,
    estimate_extinction_time,
    estimate_profile,
    identify_eigenvalue,
    verify_main_theorem,
)
from .config import ExperimentConfig, config_hash
from .dynamics import (
    integrate_desingularized,
    integrate_direct,
    to_symmetric_frame,
)
from .errors import ExtlabError
from .serialize import export_trajectory, write_json, write_plot_data

__all__ = ["RunSummary", "run_experiment", "sweep", "sweep_table"]


@dataclass
class RunSummary:
    """Flat result record for one experiment; None marks unavailable fields."""

    t_star: float | None = None
    t_star_err: float | None = None
    Lambda: float | None = None
    mu: float | None = None
    xi_star: list | None = None
    v_star: list | None = None
    eps_main: float | None = None
    eps_ir: float | None = None
    eps_ry: float | None = None
    residual_xiHA: float | None = None
    fit_quality: dict | None = None
    status: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "t_star": self.t_star,
            "t_star_err": self.t_star_err,
            "Lambda": self.Lambda,
            "mu": self.mu,
            "xi_star": self.xi_star,
            "v_star": self.v_star,
            "eps_main": self.eps_main,
            "eps_ir": self.eps_ir,
            "eps_ry": self.eps_ry,
            "residual_xiHA": self.residual_xiHA,
            "fit_quality": self.fit_quality,
            "status": self.status,
            "provenance": self.provenance,
        }


class _Stage:
    """Tags exceptions from one pipeline stage without swallowing them."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            try:
                exc.stage = self.name
            except (AttributeError, TypeError):
                pass
        return False


def run_experiment(config: ExperimentConfig, out_dir=None) -> RunSummary:
    """Execute one experiment; see the module docstring for the contract.

    Pipeline errors land in summary.status as
    {"kind": "error", "stage", "error", "message"}.
    """
    summary = RunSummary(
        provenance={"config_hash": config_hash(config),
                    "tool_version": __version__},
    )
    try:
        _pipeline(config, out_dir, summary)
    except ExtlabError as exc:
        summary.status = {
            "kind": "error",
            "stage": getattr(exc, "stage", "unknown"),
            "error": type(exc).__name__,
            "message": str(exc),
        }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_json(summary.as_dict(), os.path.join(out_dir, "summary.json"))
    return summary


def _pipeline(config: ExperimentConfig, out_dir, summary: RunSummary) -> None:
    with _Stage("spectral"):
        from .spectral import validate_and_decompose

        sd = validate_and_decompose(config.matrix_array())
    with _Stage("system"):
        from .dynamics import SystemSpec

        sys_spec = SystemSpec(
            sd=sd, H=config.build_h(), pert=config.build_perturbation()
        )

    with _Stage("integrate"):
        y0 = config.y0_array()
        opts = config.integrator_options()
        if config.scheme == "direct":
            traj = integrate_direct(sys_spec, y0, t0=config.t0, opts=opts)
        elif config.scheme == "reference":
            from .oracle import reference_integrate

            traj = reference_integrate(
                sys_spec, y0, t0=config.t0, tol=max(config.rel_tol, 1e-11),
                rho_floor=config.rho_floor,
            )
        else:
            traj = integrate_desingularized(sys_spec, y0, t0=config.t0, opts=opts)

    with _Stage("analyze"):
        traj_sym = to_symmetric_frame(traj, sd)
        T_star, T_err = estimate_extinction_time(traj_sym)
        summary.t_star = float(T_star)
        summary.t_star_err = float(T_err)
        quotient = dirichlet_quotient_series(traj_sym, sd)
        Lambda = identify_eigenvalue(quotient, sd, config.tail_fraction)
        summary.Lambda = float(Lambda)
        summary.mu = float(sd.mu(Lambda))
        profile = estimate_profile(
            traj_sym, T_star, sd, Lambda, sys_spec.H,
            fit_decades=config.fit_decades,
        )
        summary.xi_star = [float(v) for v in profile.xi_star]
        summary.v_star = [float(v) for v in profile.v_star]
        summary.eps_main = profile.eps_main
        summary.eps_ir = profile.eps_ir
        summary.eps_ry = profile.eps_ry
        summary.residual_xiHA = profile.residual_xiHA
        summary.fit_quality = dict(profile.fit_quality)

    with _Stage("verify"):
        report = verify_main_theorem(profile, traj_sym, sys_spec.H)
        if report.passed:
            summary.status = {"kind": "verified"}
        else:
            summary.status = {
                "kind": "failed",
                "clauses": [c.name for c in report.clauses if not c.passed],
            }

    if out_dir is None:
        return
    with _Stage("io"):
        os.makedirs(out_dir, exist_ok=True)
        export_trajectory(traj, os.path.join(out_dir, "trajectory.csv"))
        write_json(report.as_dict(), os.path.join(out_dir, "verification.json"))
        if traj_sym.coordinate_frame == "z_coordinates":
            proj = sd.selector(Lambda)
        else:
            proj = sd.projection(Lambda)
        write_plot_data(out_dir, traj_sym, profile, quotient, proj)
        from .plots import render_figures

        render_figures(out_dir, traj_sym, profile, quotient, proj)


def _run_row(item):
    index, name, config, out_dir = item
    run_dir = None if out_dir is None else os.path.join(out_dir, name)
    try:
        return index, name, run_experiment(config, run_dir)
    except Exception as exc:  # one bad row must not abort the batch
        bad = RunSummary(
            status={
                "kind": "error",
                "stage": getattr(exc, "stage", "run"),
                "error": type(exc).__name__,
                "message": str(exc),
            },
        )
        return index, name, bad


def sweep(
    configs: list,
    parallelism: int = 1,
    out_dir=None,
    names: list | None = None,
) -> list:
    """Run many experiments; returns summaries in input order.

    ``configs`` may mix ExperimentConfig objects and exceptions (a loader
    that failed can forward its ConfigInvalid here to get an error row
    instead of aborting the sweep).
    """
    if names is None:
        names = [f"run_{i:03d}" for i in range(len(configs))]
    items = []
    for i, (name, cfg) in enumerate(zip(names, configs)):
        items.append((i, name, cfg, out_dir))

    results = [None] * len(items)

    def work(item):
        i, name, cfg, od = item
        if isinstance(cfg, ExtlabError):
            return i, name, RunSummary(status={
                "kind": "error", "stage": "config",
                "error": type(cfg).__name__, "message": str(cfg),
            })
        return _run_row(item)

    if parallelism <= 1 or len(items) <= 1:
        for item in items:
            i, _, summ = work(item)
            results[i] = summ
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for i, _, summ in pool.map(work, items):
                results[i] = summ
    return results


def sweep_table(names: list, summaries: list) -> str:
    """Aggregate table, one row per run: key outcome columns, CSV text."""
    lines = ["name,status,Lambda,norm_xi_star,residual_xiHA,"
             "eps_main,eps_ir,eps_ry,t_star"]

    def cell(v):
        if v is None:
            return ""
        return "%.10g" % v

    for name, s in zip(names, summaries):
        kind = s.status.get("kind", "error")
        nxi = None
        if s.xi_star is not None:
            nxi = float(np.linalg.norm(s.xi_star))
        lines.append(",".join([
            name, kind, cell(s.Lambda), cell(nxi), cell(s.residual_xiHA),
            cell(s.eps_main), cell(s.eps_ir), cell(s.eps_ry), cell(s.t_star),
        ]))
    return "\n".join(lines) + "\n"
