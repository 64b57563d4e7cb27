"""
Quality versus speed
====================

A reference comparison table ships with the package.  A model is on the
front when no other model is at least as fast and at least as accurate while
being strictly better in one of the two.
"""

from pathlib import Path

from vrae.analysis.pareto import pareto_csv, pareto_front, points_from_reports, reference_reports
from vrae.analysis.plots import pareto_svg

out = Path("demo_output/pareto")
out.mkdir(parents=True, exist_ok=True)

reports = reference_reports()
for r in reports:
    print(f"{r.model:>6}  PSNR {r.psnr_db:6.3f}  SSIM {r.ssim:.3f}  NMSE {r.nmse:.4f}  {r.fps:5.0f} fps")

for quality in ("psnr", "ssim", "nmse"):
    points = points_from_reports(reports, quality)
    front = pareto_front(points)
    print(f"{quality}: front = {[p.model for p in front]}")
    (out / f"{quality}.csv").write_text(pareto_csv(points, quality))
    (out / f"{quality}.svg").write_text(pareto_svg(points, quality.upper(), timestamp=False))
