"""Rendered figures for a run: the same data as the plot CSVs, as pictures.

matplotlib is imported lazily and forced onto the Agg backend so runs work
headless; figure files land next to the delimited output.
"""

from __future__ import annotations

import os
import threading

import numpy as np

from .errors import IoError

__all__ = ["render_figures"]

# pyplot state is process global; sweep workers render from threads
_RENDER_LOCK = threading.Lock()


def _mpl():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_figures(out_dir, traj, profile, quotient, proj) -> list:
    """Write residuals.png and quotient.png; returns the paths written."""
    plt = _mpl()
    alpha = profile.alpha
    T = profile.T_star
    s = T - traj.t
    ok = s > 0
    s = s[ok]
    y = traj.y[ok]
    xi = profile.xi_star_fit

    norms = np.linalg.norm(y, axis=1)
    pred = s[:, None] ** (1.0 / alpha) * xi
    res_main = np.linalg.norm(y - pred, axis=1)
    res_ir = np.linalg.norm(y - y @ proj.T, axis=1)

    written = []
    _RENDER_LOCK.acquire()
    try:
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        ax.loglog(s, norms, lw=1.2, label=r"$|y|$")
        pos = res_main > 0
        if np.any(pos):
            ax.loglog(s[pos], res_main[pos], lw=1.0,
                      label=r"$|y - s^{1/\alpha}\,\hat\xi|$")
        pos = res_ir > 0
        if np.any(pos):
            ax.loglog(s[pos], res_ir[pos], lw=1.0, ls="--",
                      label=r"$|(I-R_\Lambda)y|$")
        # reference slope 1/alpha anchored at the largest countdown
        c = norms[np.argmax(s)] / s.max() ** (1.0 / alpha)
        ax.loglog(s, c * s ** (1.0 / alpha), color="0.6", lw=0.8, ls=":",
                  label=rf"slope $1/\alpha = {1.0 / alpha:.3g}$")
        ax.set_xlabel(r"$T_* - t$")
        ax.set_ylabel("magnitude")
        ax.legend(fontsize=8)
        ax.set_title("terminal power laws")
        fig.tight_layout()
        path = os.path.join(out_dir, "residuals.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        qs = T - quotient[:, 0]
        okq = qs > 0
        ax.semilogx(qs[okq], quotient[okq, 1], lw=1.2)
        ax.axhline(profile.Lambda, color="0.5", lw=0.8, ls="--")
        ax.invert_xaxis()
        ax.set_xlabel(r"$T_* - t$")
        ax.set_ylabel(r"$\lambda(t)$")
        ax.set_title(
            rf"quotient $\to \Lambda = {profile.Lambda:.6g}$"
        )
        fig.tight_layout()
        path = os.path.join(out_dir, "quotient.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    except OSError as exc:
        raise IoError(f"cannot write figures in {out_dir}: {exc}") from exc
    finally:
        _RENDER_LOCK.release()
    return written
