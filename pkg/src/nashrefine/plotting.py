"""Matplotlib figures rendered next to the CSV outputs of a run."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from nashrefine.experiments import read_rows  # noqa: E402


def _finish(fig, ax, path) -> Path:
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_exploitability(aggregate_csv, path, x: str = "step", title: str | None = None) -> Path:
    """Mean exploitability with a one-sd band, log scale."""
    rows = read_rows(aggregate_csv)
    xs = np.array([float(r[x]) for r in rows])
    mean = np.array([float(r["mean"]) for r in rows])
    sd = np.array([float(r["sd"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, mean, lw=1.5)
    ax.fill_between(xs, np.maximum(mean - sd, 1e-16), mean + sd, alpha=0.25)
    ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel("exploitability")
    if title:
        ax.set_title(title)
    return _finish(fig, ax, path)


def plot_sweep(aggregate_csv, path) -> Path:
    """One curve per (game, alpha) pair from a sweep aggregate."""
    series = defaultdict(list)
    for r in read_rows(aggregate_csv):
        series[(r["game"], float(r["alpha"]))].append((float(r["step"]), float(r["mean"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (game, alpha), pts in sorted(series.items()):
        pts = np.array(pts)
        ax.plot(pts[:, 0], pts[:, 1], label=f"{game}, alpha={alpha:g}")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("exploitability")
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_standings(aggregate_csv, path) -> Path:
    rows = read_rows(aggregate_csv)
    ids = [r["id"] for r in rows]
    mean = [float(r["mean_rating"]) for r in rows]
    sd = [float(r["sd_rating"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.35 * len(ids) + 1)))
    ax.barh(ids[::-1], mean[::-1], xerr=sd[::-1], color="tab:blue", alpha=0.7)
    ax.axvline(1500.0, color="k", lw=0.8)
    ax.set_xlabel("Elo rating")
    return _finish(fig, ax, path)
