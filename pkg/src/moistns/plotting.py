"""Report figures, rendered off-screen next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import State  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_timeseries(series: dict[str, np.ndarray], path: str | Path, title: str = "") -> Path:
    """Minimum dry density, minimum mixing ratio and perturbation norm against time."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(5.5, 6.0), sharex=True)
        t = series["t"]
        for ax, key, label in zip(axes, ("min_rho_d", "min_q", "perturbation_norm"),
                                  (r"$\min\,\rho_d$", r"$\min\,q$", "perturbation (sup)")):
            ax.plot(t, series[key], lw=1.2)
            ax.set_ylabel(label)
        axes[-1].set_xlabel("t")
        if title:
            axes[0].set_title(title)
        return _save(fig, Path(path))


def plot_state_slices(state: State, path: str | Path, j: int | None = None) -> Path:
    """The eight fields on the x-z plane through ``y`` index ``j`` (default: middle)."""
    g = state.grid
    j = g.ny // 2 if j is None else j
    names = ("rho_d", "u1", "u2", "u3", "T", "q_v", "q_c", "q_r")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 4, figsize=(11, 5))
        for ax, name, a in zip(axes.ravel(), names, state.arrays()):
            im = ax.imshow(a[:, j, :].T, origin="lower", extent=(0, 1, 0, 1), aspect="auto", cmap="viridis")
            ax.set_title(name)
            ax.grid(False)
            fig.colorbar(im, ax=ax, shrink=0.8)
        fig.suptitle(f"t = {state.t:.4g}, y-index {j}")
        return _save(fig, Path(path))


def plot_convergence(hs, errors, path: str | Path, title: str = "", ref_order: float = 2.0) -> Path:
    """Log-log error against mesh width with a reference slope."""
    hs = np.asarray(hs, float)
    errors = np.asarray(errors, float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ok = errors > 0
        ax.loglog(hs[ok], errors[ok], "o-", label="error")
        if ok.any():
            h0, e0 = hs[ok][0], errors[ok][0]
            ax.loglog(hs, e0 * (hs / h0) ** ref_order, "k--", lw=0.8, label=f"order {ref_order:g}")
        ax.set_xlabel("h")
        ax.set_ylabel("max error")
        ax.legend()
        if title:
            ax.set_title(title)
        return _save(fig, Path(path))


def plot_eps_sweep(eps, residuals, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        eps = np.asarray(eps, float)
        res = np.asarray(residuals, float)
        ax.loglog(eps, res, "o-", label="residual")
        ax.loglog(eps, res[0] * eps / eps[0], "k--", lw=0.8, label="slope 1")
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel("probe residual")
        ax.legend()
        return _save(fig, Path(path))


def plot_box(times, pde, ref, path: str | Path) -> Path:
    """PDE cell values against the reference box trajectory for ``T, q_v, q_c, q_r``."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(11, 3))
        for k, (ax, name) in enumerate(zip(axes, ("T", "q_v", "q_c", "q_r"))):
            ax.plot(times, [r[k] for r in ref], "k-", lw=1, label="reference")
            ax.plot(times, [p[k] for p in pde], "o", ms=3, label="PDE")
            ax.set_title(name)
            ax.set_xlabel("t")
        axes[0].legend()
        return _save(fig, Path(path))
