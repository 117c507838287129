"""Figure rendering for run traces and diagnostics.

Renders PNG figures next to the delimited outputs: the best-so-far curve
and per-evaluation scores from ``trace.csv``, sampler health (acceptance
rate and final step size per iteration) when the trace carries them, the
cumulative cost counters, and radial histograms for the annulus
diagnostic. Figures are a presentation layer only; every number they show
is read back from the delimited files.
"""

from __future__ import annotations

import csv
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import SHELL_HALF_WIDTH, RadialStats


def _read_trace(path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty trace {path}")
    columns: dict[str, np.ndarray] = {}
    for key in rows[0]:
        values = [row[key] for row in rows]
        columns[key] = np.asarray(
            [float(v) if v != "" else np.nan for v in values], dtype=np.float64
        )
    return columns


def _save(fig, path: str) -> str:
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def render_run_figures(run_dir, out_dir: Optional[str] = None) -> list[str]:
    """Render the standard figures for one run directory."""
    trace_path = os.path.join(run_dir, "trace.csv")
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    t = _read_trace(trace_path)
    n = np.arange(1, len(t["y"]) + 1)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, t["y"], ".", color="0.6", ms=4, label="evaluation")
    ax.step(n, t["best_so_far"], where="post", color="tab:red", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("objective")
    ax.legend(frameon=False)
    written.append(_save(fig, os.path.join(out_dir, "best_so_far.png")))

    if np.any(np.isfinite(t["accept_rate"])):
        fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        axes[0].plot(t["iteration"], t["accept_rate"], ".-", color="tab:blue")
        axes[0].set_ylabel("acceptance rate")
        axes[1].plot(t["iteration"], t["beta_final"], ".-", color="tab:orange")
        axes[1].set_ylabel("final step size")
        axes[1].set_xlabel("iteration")
        written.append(_save(fig, os.path.join(out_dir, "sampler_health.png")))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, t["decoder_calls_cum"], label="decoder calls")
    ax.plot(n, t["gp_predicts_cum"], label="GP predictions")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("cumulative calls")
    ax.legend(frameon=False)
    written.append(_save(fig, os.path.join(out_dir, "cost_counters.png")))
    return written


def render_radial_histogram(stats: RadialStats, path) -> str:
    """Histogram of sample radii with the sqrt(d) shell band marked."""
    centre = np.sqrt(stats.dim)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(stats.radii, bins=60, color="tab:blue", alpha=0.75)
    ax.axvspan(
        centre - SHELL_HALF_WIDTH,
        centre + SHELL_HALF_WIDTH,
        color="tab:orange",
        alpha=0.25,
        label="sqrt(d) shell",
    )
    ax.axvline(stats.mean_radius, color="tab:red", lw=1, label="mean radius")
    ax.set_xlabel("radius")
    ax.set_ylabel("count")
    ax.set_title(f"d = {stats.dim}, n = {stats.n}")
    ax.legend(frameon=False)
    return _save(fig, path)
