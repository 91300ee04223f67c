"""Figures written next to the TSV tables (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}

_MARKERS = {"DE": "o", "RDE": "s", "DM": "^", "RDM": "v"}


def _finite(xs: Sequence[float]) -> np.ndarray:
    a = np.asarray(xs, float)
    return np.where(np.isfinite(a) & (a > 0), a, np.nan)


def plot_convergence(rows: List[Dict], path: Path) -> Path:
    """e_F and GMRES iterations against lambda/h, one line per formulation."""
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        for f in sorted({r["formulation"] for r in rows}):
            sub = sorted((r for r in rows if r["formulation"] == f), key=lambda r: r["lambda_over_h"])
            x = [r["lambda_over_h"] for r in sub]
            ax1.loglog(x, _finite([r["e_F"] for r in sub]), marker=_MARKERS.get(f, "o"), label=f)
            ax2.semilogx(x, [r["iterations"] for r in sub], marker=_MARKERS.get(f, "o"), label=f)
        ax1.set_xlabel(r"$\lambda/h$")
        ax1.set_ylabel(r"$e_F$")
        ax2.set_xlabel(r"$\lambda/h$")
        ax2.set_ylabel("GMRES iterations")
        ax1.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_lowfreq(rows: List[Dict], path: Path) -> Path:
    """|q| and e_div against lambda/d for each formulation and xi."""
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        keys = sorted({(r["formulation"], r["xi"]) for r in rows})
        for f, xi in keys:
            sub = sorted((r for r in rows if r["formulation"] == f and r["xi"] == xi),
                         key=lambda r: r["lambda_over_d"])
            x = [r["lambda_over_d"] for r in sub]
            lab = f"{f}, xi={xi:.3g}"
            if f in ("DE", "RDE"):
                ax1.loglog(x, _finite([r["q_max"] for r in sub]), marker=_MARKERS.get(f, "o"), label=lab)
            ax2.loglog(x, _finite([r["e_divF"] for r in sub]), marker=_MARKERS.get(f, "o"), label=lab)
        ax1.set_xlabel(r"$\lambda/d$")
        ax1.set_ylabel(r"$\max_j |q_j|$")
        ax2.set_xlabel(r"$\lambda/d$")
        ax2.set_ylabel(r"$e_{\mathrm{div}}$")
        ax1.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_slice(s: np.ndarray, t: np.ndarray, values: np.ndarray, path: Path, title: str = "") -> Path:
    """Real part of a field component on the slice grid; NaN cells stay blank."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.8))
        v = np.real(values)
        lim = np.nanmax(np.abs(v)) if np.any(np.isfinite(v)) else 1.0
        im = ax.pcolormesh(s, t, v, shading="auto", cmap="RdBu_r", vmin=-lim, vmax=lim)
        fig.colorbar(im, ax=ax)
        ax.set_aspect("equal")
        ax.set_xlabel("s (along p)")
        ax.set_ylabel("t (along d)")
        ax.grid(False)
        if title:
            ax.set_title(title)
        fig.savefig(path)
        plt.close(fig)
    return path
