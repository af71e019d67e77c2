"""Matplotlib renderings of a convergence report."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_figures(report, fig_dir) -> list:
    """Render the energy trend, junction residuals and a-priori norms.

    Returns the list of written PNG paths.
    """
    os.makedirs(fig_dir, exist_ok=True)
    eps = np.array([row.eps for row in report.rows])
    written = []

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    if report.regime == "zero":
        energy = np.array([row.q_eps * row.E_eps for row in report.rows])
        label = "q * rescaled energy"
    else:
        energy = np.array([row.E_eps for row in report.rows])
        label = "rescaled energy"
    ax1.plot(eps, energy, "o-", label=label)
    ax1.axhline(report.limit_energy, color="k", ls="--", label="limit energy")
    ax1.set_xlabel("eps")
    ax1.set_ylabel("energy")
    ax1.invert_xaxis()
    ax1.legend(fontsize=8)
    gaps = np.array([row.gap for row in report.rows])
    ax2.semilogy(eps, np.maximum(gaps, 1e-300), "s-")
    ax2.set_xlabel("eps")
    ax2.set_ylabel("|energy gap|")
    ax2.invert_xaxis()
    fig.tight_layout()
    path = os.path.join(fig_dir, "energy.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    J = np.array([row.residuals for row in report.rows])  # (n, 6)
    for j in range(6):
        ax.semilogy(eps, np.maximum(J[:, j], 1e-300), "o-", label=f"J{j + 1}")
    ax.set_xlabel("eps")
    ax.set_ylabel("junction residual")
    ax.invert_xaxis()
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    path = os.path.join(fig_dir, "junction_residuals.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for key, label in (
        ("norm_ea", "beam strain norm"),
        ("norm_eb_weighted", "sqrt(q) plate strain norm"),
        ("h1_a", "beam H1"),
        ("h1_b", "plate H1"),
    ):
        ax.plot(eps, [row.norms[key] for row in report.rows], "o-", label=label)
    ax.set_xlabel("eps")
    ax.set_ylabel("norm")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(fig_dir, "apriori_norms.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written
