"""Command-line surface.

Subcommands: run, verify, sweep, degree, radius.  Exit codes: 0 on
success/verified, 1 when verification fails, 2 on config errors, 3 on
runtime errors.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

import numpy as np

from ._version import __version__
from .config import load_config
from .errors import ConfigInvalid, ExtlabError
from .homog import estimate_degree, probe_holder, sphere_extrema
from .runner import run_experiment, sweep, sweep_table

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extlab",
        description="Finite-time extinction laboratory for y' = -H(y)Ay + f(t)",
    )
    p.add_argument("--version", action="version", version=f"extlab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="log integrator and analysis details")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run one experiment and write artifacts")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("verify", help="run and report clause checks, no artifacts")
    sp.add_argument("--config", required=True)

    sp = sub.add_parser("sweep", help="run a set of configs concurrently")
    sp.add_argument("--configs", required=True,
                    help="glob pattern of config files")
    sp.add_argument("--parallel", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("degree", help="homogeneity degree and regularity report")
    sp.add_argument("--config", required=True)

    sp = sub.add_parser("radius", help="extinction radius certificate")
    sp.add_argument("--config", required=True)
    return p


def _status_exit(status: dict) -> int:
    kind = status.get("kind")
    if kind == "verified":
        return EXIT_OK
    if kind == "failed":
        return EXIT_FAILED
    return EXIT_RUNTIME


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg, out_dir=args.out)
    kind = summary.status.get("kind")
    if kind == "verified":
        print(f"verified: T* = {summary.t_star:.12g} "
              f"(err {summary.t_star_err:.3g}), Lambda = {summary.Lambda:.12g}")
    elif kind == "failed":
        print("verification FAILED on clauses: "
              + ", ".join(summary.status["clauses"]))
    else:
        print(f"error in stage {summary.status.get('stage')}: "
              f"{summary.status.get('error')}: {summary.status.get('message')}")
    print(f"artifacts in {args.out}")
    return _status_exit(summary.status)


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg, out_dir=None)
    kind = summary.status.get("kind")
    if kind == "error":
        print(f"error in stage {summary.status.get('stage')}: "
              f"{summary.status.get('error')}: {summary.status.get('message')}")
        return EXIT_RUNTIME
    print(f"T*      = {summary.t_star:.12g} +/- {summary.t_star_err:.3g}")
    print(f"Lambda  = {summary.Lambda:.12g}  (gap mu = {summary.mu:.6g})")
    print(f"|xi*|   = {float(np.linalg.norm(summary.xi_star)):.12g}")
    print(f"alpha*Lambda*H(xi*) - 1 residual = {summary.residual_xiHA:.3e}")
    print(f"eps_main = {summary.eps_main:.4g}, eps_ir = {summary.eps_ir:.4g}, "
          f"eps_ry = {summary.eps_ry:.4g}")
    if kind == "verified":
        print("all clauses passed")
        return EXIT_OK
    print("FAILED clauses: " + ", ".join(summary.status["clauses"]))
    return EXIT_FAILED


def _cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.configs))
    names = []
    configs = []
    for path in paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        name = stem
        k = 1
        while name in names:
            name = f"{stem}_{k}"
            k += 1
        names.append(name)
        try:
            configs.append(load_config(path))
        except ConfigInvalid as exc:
            configs.append(exc)

    summaries = sweep(configs, parallelism=args.parallel,
                      out_dir=args.out, names=names)
    table = sweep_table(names, summaries)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w",
              encoding="ascii", newline="") as fh:
        fh.write(table)
    print(table, end="")

    kinds = [s.status.get("kind") for s in summaries]
    stages = [s.status.get("stage") for s in summaries]
    if any(k == "error" and st != "config" for k, st in zip(kinds, stages)):
        return EXIT_RUNTIME
    if any(k == "error" for k in kinds):
        return EXIT_CONFIG
    if any(k == "failed" for k in kinds):
        return EXIT_FAILED
    return EXIT_OK


def _cmd_degree(args) -> int:
    cfg = load_config(args.config)
    H = cfg.build_h()
    est = estimate_degree(H)
    c1, c2 = sphere_extrema(H, seed=cfg.seed)
    print(f"declared degree   : {-cfg.alpha:.12g}")
    print(f"estimated degree  : {est.beta:.12g} "
          f"(max deviation {est.max_deviation:.3e})")
    print(f"sphere range      : c1 = {c1:.12g}, c2 = {c2:.12g}")

    x0 = cfg.y0_array()
    x0 = x0 / np.linalg.norm(x0)
    probes = [("y0 direction", x0)]
    e1 = np.zeros(cfg.n)
    e1[0] = 1.0
    if np.linalg.norm(x0 - e1) > 1e-9:
        probes.append(("axis e1", e1))
    for label, x in probes:
        hp = probe_holder(H, x, seed=cfg.seed)
        tag = " (flat: function locally constant)" if hp.degenerate else ""
        print(f"regularity at {label}: gamma = {hp.gamma_est:.4f}, "
              f"C = {hp.C_est:.6g}, r2 = {hp.r2:.4f}{tag}")
    return EXIT_OK


def _cmd_radius(args) -> int:
    cfg = load_config(args.config)
    from .dynamics import extinction_radius

    sys_spec = cfg.build_system()
    r0, a0 = extinction_radius(sys_spec)
    print(f"decay margin a0    = {a0:.12g}")
    print(f"extinction radius  = {r0:.12g}")
    y0n = float(np.linalg.norm(cfg.y0_array()))
    inside = "inside" if y0n <= r0 else "OUTSIDE"
    print(f"|y0| = {y0n:.12g} ({inside} the certified ball)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "sweep": _cmd_sweep,
        "degree": _cmd_degree,
        "radius": _cmd_radius,
    }
    try:
        return handlers[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExtlabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        logging.getLogger("extlab").debug("unexpected failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
