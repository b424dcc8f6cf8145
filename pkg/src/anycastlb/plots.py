"""Render run reports as figures next to their CSV outputs.

All functions write PNG files and return the written paths; nothing is
shown interactively.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .dual import ConvergenceReport
from .greedy import Trajectory, vector_field
from .model import SystemInstance

_DPI = 130


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_convergence(report: ConvergenceReport, stem: str) -> list[str]:
    """Cost/dual-objective and price trajectories of a dual run."""
    written = []
    k = np.arange(report.iterations)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    finite = np.isfinite(report.cost)
    ax1.plot(k[finite], report.cost[finite], label="primal cost", color="tab:blue")
    if np.isfinite(report.dual_obj).any():
        ax1.plot(k, report.dual_obj, label="dual objective", color="tab:orange")
    ax1.axhline(report.best_cost, ls=":", color="gray",
                label=f"best = {report.best_cost:.4g}")
    ax1.set_ylabel("objective")
    ax1.legend(loc="best", fontsize=8)
    ax2.semilogy(k, np.maximum(report.grad_norm, 1e-300), color="tab:green")
    ax2.set_ylabel("super-gradient norm")
    ax2.set_xlabel("iteration")
    written.append(_save(fig, f"{stem}_convergence.png"))

    if report.mu is not None:
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        ax1.plot(k, report.mu)
        ax1.set_ylabel("prices $\\mu_i$")
        ax2.plot(k, report.x)
        ax2.set_ylabel("controls $x_i$")
        ax2.set_ylim(-0.02, 1.02)
        ax2.set_xlabel("iteration")
        written.append(_save(fig, f"{stem}_iterates.png"))

    if report.overhead is not None:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot(k, report.overhead, color="tab:red")
        ax.set_xlabel("iteration")
        ax.set_ylabel("control-packet rate")
        ax.set_title(f"total overhead = {report.overhead_total:.4g}")
        written.append(_save(fig, f"{stem}_overhead.png"))
    return written


def plot_trajectory(traj: Trajectory, instance: SystemInstance, stem: str) -> list[str]:
    """Time series of controls and loads; phase portrait for two nodes."""
    written = []
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(traj.t, traj.x)
    ax1.set_ylabel("controls $x_i$")
    ax1.set_ylim(-0.02, 1.02)
    ax2.plot(traj.t, traj.S)
    for ti in np.unique(instance.T):
        ax2.axhline(ti, ls=":", color="gray")
    ax2.set_ylabel("proxy loads $S_i$")
    ax2.set_xlabel("time")
    written.append(_save(fig, f"{stem}_timeseries.png"))

    if instance.n == 2:
        fig, ax = plt.subplots(figsize=(5.2, 5))
        grid = np.linspace(0.02, 0.98, 18)
        U = np.empty((18, 18))
        V = np.empty((18, 18))
        for i, x1 in enumerate(grid):
            for j, x2 in enumerate(grid):
                f = vector_field(instance, np.array([x1, x2]))
                U[j, i], V[j, i] = f[0], f[1]
        ax.quiver(grid, grid, U, V, color="lightsteelblue", angles="xy")
        ax.plot(traj.x[:, 0], traj.x[:, 1], color="tab:red")
        ax.plot(traj.x[0, 0], traj.x[0, 1], "o", color="tab:red", ms=5)
        ax.plot(traj.x[-1, 0], traj.x[-1, 1], "s", color="black", ms=6)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        written.append(_save(fig, f"{stem}_phase.png"))
    return written


def plot_sweep(stats, stem: str) -> list[str]:
    """Mean +/- std of each algorithm's metric against the mean-load grid."""
    written = []
    algos = sorted({s.algorithm for s in stats})
    for algo in algos:
        rows = sorted([s for s in stats if s.algorithm == algo], key=lambda s: s.a_bar)
        a = np.array([r.a_bar for r in rows])
        m = np.array([r.mean for r in rows])
        sd = np.array([r.std for r in rows])
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.errorbar(a, m, yerr=sd, marker="o", capsize=3)
        ax.set_xscale("log")
        ax.set_xlabel("mean load $\\bar{A}$")
        if algo == "greedy":
            ax.set_ylabel("uncontrollably overloaded nodes")
        else:
            ax.set_ylabel("final cost")
            if np.isfinite(m).all() and (m > 0).all():
                ax.set_yscale("log")
        ax.set_title(algo)
        written.append(_save(fig, f"{stem}_{algo}.png"))
    return written


def figure_stem(out_csv: str, figures_dir: str) -> str:
    os.makedirs(figures_dir, exist_ok=True)
    base = os.path.splitext(os.path.basename(out_csv))[0]
    return os.path.join(figures_dir, base)
