"""Matplotlib rendering of the report figures, written as PNG files next to
the CSV datasets. Pure consumers of metrics output; nothing here feeds back
into the simulation."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .metrics import Histogram, PathStats, SweepTable, moving_average  # noqa: E402

DPI = 150


def plot_layout_map(positions, pointers, sink, out_path, title="relay tree") -> None:
    """Node map with pointer edges, the analogue of the tree overview plot."""
    pos = np.asarray(positions, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 7))
    segs = [
        (pos[i], pos[p])
        for i, p in enumerate(pointers)
        if p is not None
    ]
    if segs:
        ax.add_collection(LineCollection(segs, colors="0.4", linewidths=0.4))
    ax.scatter(pos[:, 0], pos[:, 1], s=2, c="k")
    ax.scatter([pos[sink, 0]], [pos[sink, 1]], s=60, c="red", marker="*", zorder=3)
    ax.set_aspect("equal", adjustable="box")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def plot_timeseries(series: dict[str, list[int]], window: int, out_path) -> None:
    """Per-step transmission totals with their trailing moving average."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for label, tx in series.items():
        ma = moving_average(tx, window)
        ax.plot(range(len(ma)), ma, label=f"{label} ({window}-step avg)")
    ax.set_xlabel("time (steps)")
    ax.set_ylabel("transmissions per step")
    ax.set_title("network traffic during tree buildup")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def _hist_steps(ax, hist: Histogram, label: str) -> None:
    edges = np.asarray(hist.edges)
    counts = np.asarray(hist.counts)
    ax.stairs(counts, edges, label=label, fill=False, linewidth=1.5)


def plot_message_hists(hists: dict[str, Histogram], out_path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, hist in hists.items():
        _hist_steps(ax, hist, label)
    ax.set_xlabel("messages sent per node")
    ax.set_ylabel("nodes")
    ax.set_title("per-node message counts")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def plot_cost_hists(hists: dict[str, Histogram], out_path) -> None:
    fig, axes = plt.subplots(
        len(hists), 1, figsize=(7, 3.2 * len(hists)), squeeze=False
    )
    for ax, (label, hist) in zip(axes[:, 0], hists.items()):
        _hist_steps(ax, hist, label)
        ax.set_ylabel("nodes")
        ax.legend(loc="upper right")
    axes[-1, 0].set_xlabel("route cost to the sink")
    axes[0, 0].set_title("per-node route cost")
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def plot_hops_hists(stats: dict[str, PathStats], out_path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    top = max(
        (max((s.hops[i] for i in s.reached), default=0) for s in stats.values()),
        default=0,
    )
    edges = [float(e) for e in range(top + 2)]
    for label, s in stats.items():
        chain = [s.hops[i] for i in s.reached]
        _hist_steps(ax, Histogram.from_samples(chain, edges), label)
    ax.set_xlabel("nodes on the route to the sink")
    ax.set_ylabel("nodes")
    ax.set_title("pointer-chain lengths")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def plot_sweep(table: SweepTable, out_path) -> None:
    """Mean messages per node and mean path cost against f, one curve per k."""
    ks = sorted({r.k for r in table.rows})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for k in ks:
        rows = sorted((r for r in table.rows if r.k == k), key=lambda r: r.f)
        fs = [r.f for r in rows]
        ax1.plot(fs, [r.mean_messages for r in rows], marker="o", label=f"k={k}")
        ax2.plot(fs, [r.mean_cost for r in rows], marker="o", label=f"k={k}")
    ax1.set_xlabel("threshold f")
    ax1.set_ylabel("mean messages per node")
    ax2.set_xlabel("threshold f")
    ax2.set_ylabel("mean path cost")
    if any(not math.isnan(r.mean_messages) and r.mean_messages > 0 for r in table.rows):
        ax1.set_yscale("log")
    ax1.legend()
    ax2.legend()
    fig.suptitle(f"traffic and cost over the (f, k) grid [{table.gate_mode}]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
