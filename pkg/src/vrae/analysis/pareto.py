"""Non-dominated (quality, FPS) model sets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from ..metrics import MetricsReport, read_report_csv

# column in the metrics CSV and whether larger is better
QUALITY_COLUMNS = {"psnr": ("psnr_db", True), "ssim": ("ssim", True), "nmse": ("nmse", False)}


@dataclass(frozen=True)
class ParetoPoint:
    model: str
    quality: float
    fps: float
    params: int = 0
    maximize: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.quality) and math.isfinite(self.fps)):
            raise ValueError(f"{self.model}: non-finite coordinates ({self.quality}, {self.fps})")

    @property
    def oriented(self) -> tuple[float, float]:
        return (self.quality if self.maximize else -self.quality), self.fps


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    (qa, fa), (qb, fb) = a.oriented, b.oriented
    return qa >= qb and fa >= fb and (qa > qb or fa > fb)


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """All non-dominated points, fastest first.  Exact duplicates are all kept."""
    pts = list(points)
    if len({p.maximize for p in pts}) > 1:
        raise ValueError("mixed quality orientations")
    ordered = sorted(pts, key=lambda p: (-p.oriented[1], -p.oriented[0], p.model))
    front: list[ParetoPoint] = []
    best_q = -math.inf
    i = 0
    # sweep in groups of equal fps: a point survives if its quality beats every faster point
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].fps == ordered[i].fps:
            j += 1
        group = ordered[i:j]
        top = group[0].oriented[0]
        if top > best_q:
            front.extend(p for p in group if p.oriented[0] == top)
            best_q = top
        i = j
    return front


def points_from_reports(reports: Sequence[MetricsReport], quality: str = "psnr") -> list[ParetoPoint]:
    if quality not in QUALITY_COLUMNS:
        raise ValueError(f"quality must be one of {sorted(QUALITY_COLUMNS)}, got {quality!r}")
    column, maximize = QUALITY_COLUMNS[quality]
    return [ParetoPoint(r.model, getattr(r, column), r.fps, r.params, maximize) for r in reports]


def reference_reports() -> list[MetricsReport]:
    """Reference comparison table of ten restoration models (quality at 256x256, FPS on an RTX 4070)."""
    ref = resources.files("vrae.resources").joinpath("reference_metrics.csv")
    with resources.as_file(ref) as path:
        return read_report_csv(path)


def pareto_csv(points: Sequence[ParetoPoint], quality: str) -> str:
    on_front = {id(p) for p in pareto_front(points)}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "quality_metric", "quality", "fps", "params", "on_front"])
    for p in points:
        writer.writerow([p.model, quality, repr(p.quality), repr(p.fps), p.params,
                         "true" if id(p) in on_front else "false"])
    return buf.getvalue()
