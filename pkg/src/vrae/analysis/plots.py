"""Static SVG renderings of entropy profiles and Pareto fronts."""

from __future__ import annotations

import io
from datetime import datetime, timezone
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .entropy import EntropyProfile  # noqa: E402
from .pareto import ParetoPoint, pareto_front  # noqa: E402


def _to_svg(fig, timestamp: bool) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "vrae", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    svg = buf.getvalue()
    if timestamp:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        svg = svg.replace("<svg ", f"<!-- generated {stamp} -->\n<svg ", 1)
    return svg


def entropy_svg(profiles: Sequence[EntropyProfile], timestamp: bool = True) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for prof in profiles:
        xs = range(1, len(prof.avg_delta_h) + 1)
        ax.plot(xs, prof.avg_delta_h, marker="o", label=prof.model)
    ax.set_xlabel("encoder block")
    ax.set_ylabel("average entropy change (nats)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _to_svg(fig, timestamp)


def pareto_svg(points: Sequence[ParetoPoint], quality_label: str, timestamp: bool = True) -> str:
    front = pareto_front(points)
    fig, ax = plt.subplots(figsize=(6, 4))
    sc = ax.scatter([p.fps for p in points], [p.quality for p in points],
                    c=[p.params / 1e6 for p in points], cmap="viridis")
    for p in points:
        ax.annotate(p.model, (p.fps, p.quality), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.plot([p.fps for p in front], [p.quality for p in front], color="red")
    fig.colorbar(sc, ax=ax, label="params (M)")
    ax.set_xlabel("FPS")
    ax.set_ylabel(quality_label)
    ax.grid(alpha=0.3)
    return _to_svg(fig, timestamp)
