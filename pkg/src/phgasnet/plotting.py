"""Matplotlib figures for stored runs (used by the CLI ``--figures`` flag)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def run_figures(report, snap, out_dir, label: str = "run") -> list:
    """Energy/mass histories and final field profiles of one (lifted) run."""
    plt = _plt()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].plot(report.times, report.H, label="H")
    if report.H_c is not None:
        ax[0].plot(report.times, report.H_c, "--", label="H_c")
    ax[0].set_xlabel("t")
    ax[0].set_ylabel("Hamiltonian")
    ax[0].legend()
    ax[1].plot(report.times, report.mass)
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("total mass")
    fig.tight_layout()
    p = out / f"{label}_balances.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    L = snap.layout
    if L is not None:
        fig, ax = plt.subplots(1, 3, figsize=(12, 3.5))
        for k in range(len(L.n)):
            for a, name in zip(ax, ("rho", "m", "e")):
                v = snap.field(name, k)[:, -1]
                a.plot(np.linspace(0.0, 1.0, len(v)), v, label=f"pipe {k + 1}")
        for a, name in zip(ax, ("rho", "m", "e")):
            a.set_title(f"{name} at t={snap.times[-1]:g}")
            a.set_xlabel("x / L")
        if len(L.n) > 1:
            ax[0].legend(fontsize="small")
        fig.tight_layout()
        p = out / f"{label}_profiles.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths


def error_figure(times, errors, out_path, title: str = "relative error") -> Path:
    """Semilog plot of a per-step error history."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(times, np.maximum(np.asarray(errors), 1e-18))
    ax.set_xlabel("t")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)
