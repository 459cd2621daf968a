"""Trajectory, summary and plot-data persistence.

Numbers are written with 17 significant digits so a round trip through
text reproduces the doubles bit for bit.  JSON reports avoid timestamps
and sort their keys: rerunning an identical config must produce an
identical byte stream.  JSON has no infinities, so non-finite floats
travel as the strings "inf", "-inf", "nan"; readers map them back.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .dynamics import Trajectory
from .errors import IoError

__all__ = [
    "export_trajectory",
    "read_trajectory",
    "jsonify",
    "dump_json",
    "write_json",
    "write_plot_data",
]

_FMT = "%.17g"


def export_trajectory(traj: Trajectory, path) -> None:
    """Write samples as CSV: header t,rho,lambda,y_0,...,y_{n-1}; LF endings."""
    n = traj.n
    header = "t,rho,lambda," + ",".join(f"y_{i}" for i in range(n))
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(header + "\n")
            for i in range(len(traj)):
                row = [traj.t[i], traj.rho[i], traj.lam[i], *traj.y[i]]
                fh.write(",".join(_FMT % v for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write trajectory to {path}: {exc}") from exc


def read_trajectory(path):
    """Read an exported CSV back; returns (t, rho, lam, y) arrays."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise IoError(f"cannot read trajectory from {path}: {exc}") from exc
    cols = header.split(",")
    if cols[:3] != ["t", "rho", "lambda"]:
        raise IoError(f"{path} does not look like a trajectory export")
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3:]


def jsonify(obj):
    """Recursively convert to JSON-safe data; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def unjsonify_float(v):
    """Inverse of the non-finite encoding for a single scalar field."""
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def dump_json(doc: dict) -> str:
    return json.dumps(jsonify(doc), sort_keys=True, indent=2) + "\n"


def write_json(doc: dict, path) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(dump_json(doc))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _log10_or_blank(v: float) -> str:
    if v is None or not math.isfinite(v) or v <= 0.0:
        return ""
    return _FMT % math.log10(v)


def write_plot_data(out_dir, traj: Trajectory, profile, quotient, proj) -> None:
    """Emit the log-log fit data as two CSVs next to the trajectory.

    plot_residuals.csv: log10(T*-t) against the norm of y and the three fit
    residuals, one row per sample inside the extinction countdown; blank
    cells mark nonpositive values.  ``proj`` is the eigenspace projection
    in the trajectory's frame.  plot_quotient.csv: the quotient series with
    log10 |lambda - Lambda|.
    """
    T = profile.T_star
    alpha = profile.alpha
    xi = profile.xi_star_fit
    s = T - traj.t
    ok = s > 0

    try:
        path = os.path.join(out_dir, "plot_residuals.csv")
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write("log10_s,log10_norm_y,log10_res_main,log10_res_ir,"
                     "log10_res_ry\n")
            for i in np.nonzero(ok)[0]:
                si = float(s[i])
                yi = traj.y[i]
                pred = si ** (1.0 / alpha) * xi
                res_main = float(np.linalg.norm(yi - pred))
                res_ir = float(np.linalg.norm(yi - proj @ yi))
                res_ry = float(np.linalg.norm(proj @ (yi - pred)))
                fh.write(",".join([
                    _FMT % math.log10(si),
                    _log10_or_blank(float(np.linalg.norm(yi))),
                    _log10_or_blank(res_main),
                    _log10_or_blank(res_ir),
                    _log10_or_blank(res_ry),
                ]) + "\n")

        path = os.path.join(out_dir, "plot_quotient.csv")
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write("t,lambda,log10_s,log10_lambda_gap\n")
            for (t_i, lam_i), si, good in zip(quotient, s, ok):
                if not good:
                    continue
                fh.write(",".join([
                    _FMT % t_i,
                    _FMT % lam_i,
                    _FMT % math.log10(float(si)),
                    _log10_or_blank(abs(lam_i - profile.Lambda)),
                ]) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write plot data in {out_dir}: {exc}") from exc
