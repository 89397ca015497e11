"""Report figures (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_t_cycle_gap(curve: np.ndarray, J: float, path, epsilon: float | None = None, T_mix=None):
    """``J^T - J`` against the number of cycles ``T``."""
    T = np.arange(1, len(curve) + 1)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(T, curve - J, marker=".", lw=1)
    ax.axhline(0.0, color="0.6", lw=0.8)
    if epsilon is not None:
        ax.axhline(epsilon, color="tab:red", ls="--", lw=0.8, label=f"eps = {epsilon:g}")
        ax.axhline(-epsilon, color="tab:red", ls="--", lw=0.8)
    if T_mix is not None:
        ax.axvline(T_mix, color="tab:green", ls=":", lw=1, label=f"T_C = {T_mix}")
    ax.set_xlabel("cycles T")
    ax.set_ylabel("J^T - J")
    ax.set_title("T-cycle cost gap")
    if epsilon is not None or T_mix is not None:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_knownness(progress, path):
    """Fraction of known component states against simulation steps."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for k, run in enumerate(progress):
        steps = [p[0] for p in run]
        frac = [p[2] for p in run]
        ax.step(steps, frac, where="post", label=f"component {k}")
    ax.set_xlabel("steps")
    ax.set_ylabel("known fraction")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Knownness progress")
    if len(progress) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
