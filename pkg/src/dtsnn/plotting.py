"""Figure rendering for the report commands.

Each report CSV gets a sibling PNG with the same data: the difference
histogram as a log-scale bar chart, and the bitwidth cost scan as paired
curves with the optimum marked.  Rendering uses the in-memory canvas
only, so it works headless and holds no global plotting state.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def render_histogram(histogram: Mapping[int, int], path) -> None:
    """Bar chart of spike-time difference counts."""
    fig = Figure(figsize=(7, 4))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    items = sorted((int(k), int(v)) for k, v in histogram.items())
    if items:
        xs = [k for k, _ in items]
        ys = [v for _, v in items]
        ax.bar(xs, ys, width=0.9, color="#32608c")
        ax.set_yscale("log")
    ax.set_xlabel("difference time (ticks)")
    ax.set_ylabel("count")
    ax.set_title("Histogram of differential spike times")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def render_bitwidth_curve(
    rows: Sequence[tuple[int, int, int]], b_star: int | None, path
) -> None:
    """Total encoded bits against symbol bitwidth, optimum marked."""
    fig = Figure(figsize=(7, 4))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    if rows:
        bs = [r[0] for r in rows]
        ax.plot(bs, [r[1] for r in rows], marker="o", label="closed-form bits")
        ax.plot(bs, [r[2] for r in rows], marker="s", label="encoded bits")
        if b_star is not None:
            ax.axvline(b_star, color="#aa3333", linestyle="--", label=f"b* = {b_star}")
        ax.set_xticks(bs)
        ax.legend()
    ax.set_xlabel("symbol bitwidth b")
    ax.set_ylabel("total bits")
    ax.set_title("Encoding cost vs. symbol bitwidth")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
