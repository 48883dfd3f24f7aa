"""Matplotlib renderers for experiment reports.

Every function writes one PNG next to the delimited output and returns the
path.  All rendering goes through the Agg backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import PathGrid, PotentialGrid
from .model import axis_coords

_DPI = 130


def _finish(fig, out_path: str) -> str:
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def plot_path(path: PathGrid, out_path: str, title: str = "trajectory") -> str:
    """Space means per color over time; for d=1 also a space-time image."""
    d = path.d
    sums = path.fields.mean(axis=tuple(range(2, 2 + d)))  # (K+1, colors)
    if d == 1:
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.4))
    else:
        fig, ax0 = plt.subplots(figsize=(5, 3.4))
    for i in range(path.n_colors):
        ax0.plot(path.times, sums[:, i], label=f"color {i} (a={path.colors[i][0]:g})")
    ax0.set_xlabel("t")
    ax0.set_ylabel("space mean")
    ax0.legend(fontsize=8)
    ax0.set_title(title)
    if d == 1:
        total = path.fields.sum(axis=1)  # (K+1, M)
        im = ax1.imshow(
            total.T,
            aspect="auto",
            origin="lower",
            extent=(path.times[0], path.times[-1], 0.0, 1.0),
            cmap="RdBu_r",
            vmin=-1.0,
            vmax=1.0,
        )
        ax1.set_xlabel("t")
        ax1.set_ylabel("r")
        fig.colorbar(im, ax=ax1, label="sum over colors")
    return _finish(fig, out_path)


def plot_potential(V: PotentialGrid, out_path: str) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    n_colors = V.fields.shape[1]
    d = V.fields.ndim - 2
    if d == 1:
        M = V.fields.shape[-1]
        r = axis_coords(M)
        for i in range(n_colors):
            ax.plot(r, V.fields[0, i], label=f"color {i}, t={V.times[0]:g}")
            if V.fields.shape[0] > 1:
                ax.plot(r, V.fields[-1, i], "--", label=f"color {i}, t={V.times[-1]:g}")
        ax.set_xlabel("r")
    else:
        means = V.fields.mean(axis=tuple(range(2, 2 + d)))
        for i in range(n_colors):
            ax.plot(V.times, means[:, i], label=f"color {i} mean")
        ax.set_xlabel("t")
    ax.set_ylabel("V")
    ax.legend(fontsize=8)
    ax.set_title("control potential")
    return _finish(fig, out_path)


def plot_hydro(report: dict, out_path: str) -> str:
    """Log-log deviation medians vs lattice size with an L^{-d/2} guide."""
    L = np.array([e["L"] for e in report["per_L"]], dtype=float)
    med = np.array([e["median"] for e in report["per_L"]])  # (nL, bank)
    q25 = np.array([e["q25"] for e in report["per_L"]])
    q75 = np.array([e["q75"] for e in report["per_L"]])
    d = report["model"]["d"]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for j in range(med.shape[1]):
        ax.errorbar(
            L,
            med[:, j],
            yerr=[med[:, j] - q25[:, j], q75[:, j] - med[:, j]],
            marker="o",
            capsize=3,
            label=f"test mode {j}",
        )
    guide = med[0].max() * (L / L[0]) ** (-d / 2)
    ax.plot(L, guide, "k:", label=rf"$L^{{-{d}/2}}$ guide")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("L")
    ax.set_ylabel(r"sup$_t$ |pairing deviation|")
    ax.set_title("hydrodynamic convergence")
    ax.legend(fontsize=8)
    return _finish(fig, out_path)


def plot_tilt(report: dict, out_path: str) -> str:
    """Estimated decay rate vs lattice size against the variational cost."""
    entries = report["per_L"]
    L = np.array([e["L"] for e in entries], dtype=float)
    vals = np.array(
        [e["minus_gamma_d_log_Q"] if e["minus_gamma_d_log_Q"] is not None else np.nan
         for e in entries]
    )
    hits = np.array([e["hit_fraction"] for e in entries])
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax0.plot(L, vals, "o-", label=r"$-\gamma^d \log \hat Q$")
    ax0.axhline(report["quenched_cost"], color="k", ls="--", label="path cost")
    ax0.axhline(report["control_cost"], color="g", ls=":", label="control cost")
    ax0.set_xscale("log", base=2)
    ax0.set_xlabel("L")
    ax0.set_ylabel("rate")
    ax0.legend(fontsize=8)
    ax0.set_title("neighborhood decay rate")
    ax1.plot(L, hits, "s-")
    ax1.set_xscale("log", base=2)
    ax1.set_ylim(0, 1.05)
    ax1.set_xlabel("L")
    ax1.set_ylabel("hit fraction")
    ax1.set_title("tilted sampler hit rate")
    return _finish(fig, out_path)


def plot_diagnostics(report: dict, out_path: str) -> str:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
    ls = [e["l"] for e in report["ergodic_defects"]]
    defect = np.array([e["mean_defect"] for e in report["ergodic_defects"]])
    for i in range(defect.shape[1]):
        ax0.plot(ls, defect[:, i], "o-", label=f"color {i}")
    ax0.set_yscale("log")
    ax0.set_xlabel("block radius l")
    ax0.set_ylabel("mean ergodic defect")
    ax0.legend(fontsize=8)
    ax0.set_title("disorder block averages")
    rep = report["replacement"]
    ax1.bar([0, 1], [rep["error"], rep["bound_main"]], color=["C0", "C3"])
    ax1.set_xticks([0, 1], ["replacement error", "a priori bound"])
    ax1.set_yscale("log")
    mart = report["martingale"]
    ax1.set_title(
        f"replacement; martingale var/qv = {mart['ratio']:.3f}", fontsize=9
    )
    return _finish(fig, out_path)


def plot_rate(times: np.ndarray, node_costs: np.ndarray, out_path: str) -> str:
    """Per-time Hamiltonian density along a path (summed over colors/cells)."""
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    per_time = node_costs.sum(axis=tuple(range(1, node_costs.ndim)))
    ax.plot(times, per_time, "o-")
    ax.set_xlabel("t")
    ax.set_ylabel("cost density")
    ax.set_title("action density along path")
    return _finish(fig, out_path)
