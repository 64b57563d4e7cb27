"""PSNR / NMSE / SSIM / FPS and metric report rows.

All image metrics take ``(n, c, h, w)`` or ``(c, h, w)`` arrays with values
in [0, 1] and return one value per image; callers average.
"""

from __future__ import annotations

import csv
import io
import logging
import platform
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import DegradationConfig
from .model import VraeNetwork, count_parameters
from .nn.threads import get_threads

log = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
REPORT_FIELDS = ["model", "psnr_db", "nmse", "ssim", "fps", "params", "threads", "hardware"]


def _as_batch(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"expected (n, c, h, w) or (c, h, w) images, got shape {a.shape}")
    return a


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p, t = _as_batch(pred), _as_batch(target)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
    return p, t


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> np.ndarray:
    """10 log10(peak^2 / MSE) per image; identical pairs are capped at 99 dB."""
    p, t = _pair(pred, target)
    mse = ((p - t) ** 2).mean(axis=(1, 2, 3))
    out = np.full(mse.shape, PSNR_CAP_DB)
    nz = mse > 0
    out[nz] = 10.0 * np.log10(peak ** 2 / mse[nz])
    if not nz.all():
        log.warning("%d identical image pair(s): PSNR capped at %.1f dB", int((~nz).sum()), PSNR_CAP_DB)
    return out


def nmse(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """||pred - target||^2 / ||target||^2 per image; NaN where the target is all zero."""
    p, t = _pair(pred, target)
    err = ((p - t) ** 2).sum(axis=(1, 2, 3))
    energy = (t ** 2).sum(axis=(1, 2, 3))
    out = np.full(err.shape, np.nan)
    ok = energy > 0
    out[ok] = err[ok] / energy[ok]
    if not ok.all():
        log.warning("%d all-zero target(s) excluded from NMSE", int((~ok).sum()))
    return out


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    x = sliding_window_view(x, k, axis=-1) @ g
    return sliding_window_view(x, k, axis=-2) @ g


def ssim(pred: np.ndarray, target: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), valid positions only."""
    p, t = _pair(pred, target)
    if min(p.shape[2:]) < SSIM_WINDOW:
        raise ValueError(f"images of {p.shape[2:]} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_p, mu_t = _filter_valid(p, g), _filter_valid(t, g)
    s_pp = _filter_valid(p * p, g) - mu_p ** 2
    s_tt = _filter_valid(t * t, g) - mu_t ** 2
    s_pt = _filter_valid(p * t, g) - mu_p * mu_t
    num = (2 * mu_p * mu_t + c1) * (2 * s_pt + c2)
    den = (mu_p ** 2 + mu_t ** 2 + c1) * (s_pp + s_tt + c2)
    return (num / den).mean(axis=(1, 2, 3))


# --------------------------------------------------------------------------
# speed


def hardware_string() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or "unknown"


@dataclass(frozen=True)
class FpsResult:
    fps: float
    median_latency_s: float
    iters: int
    threads: int
    hardware: str


def measure_fps(net: VraeNetwork, input_dims: tuple[int, int, int] | None = None,
                warmup: int = 10, iters: int = 100, seed: int = 0) -> FpsResult:
    """Inverse median latency of single-image eval-mode forward passes."""
    if input_dims is None:
        input_dims = (3, *net.config.input_hw)
    x = np.random.default_rng(seed).random((1, *input_dims), dtype=np.float32)
    for _ in range(warmup):
        net(x)
    times = []
    for _ in range(max(1, iters)):
        t0 = time.perf_counter()
        net(x)
        times.append(time.perf_counter() - t0)
    med = statistics.median(times)
    return FpsResult(1.0 / med, med, len(times), get_threads(), hardware_string())


# --------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    model: str
    psnr_db: float
    nmse: float
    ssim: float
    fps: float
    params: int
    threads: int
    hardware: str
    psnr_capped: int = 0

    def row(self) -> list[str]:
        fps = "nan" if not np.isfinite(self.fps) else f"{self.fps:.3f}"
        return [self.model, f"{self.psnr_db:.6f}", f"{self.nmse:.8f}", f"{self.ssim:.6f}",
                fps, str(self.params), str(self.threads), self.hardware]


def write_report_csv(reports: Sequence[MetricsReport], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in reports:
        writer.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_report_csv(path: str | Path) -> list[MetricsReport]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsReport(
                model=row["model"],
                psnr_db=float(row["psnr_db"]),
                nmse=float(row["nmse"]),
                ssim=float(row["ssim"]),
                fps=float(row["fps"]) if row["fps"] else float("nan"),
                params=int(float(row["params"])),
                threads=int(row.get("threads") or 0),
                hardware=row.get("hardware", ""),
            ))
    return out


def restore(net: VraeNetwork, degraded: np.ndarray) -> np.ndarray:
    """Eval-mode forward clamped to the valid intensity range."""
    return np.clip(net(degraded, train=False), 0.0, 1.0)


def evaluate(net: VraeNetwork, source, degradation: DegradationConfig, label: str | None = None,
             batch_size: int = 16, fps_iters: int | None = 100, fps_warmup: int = 10) -> MetricsReport:
    """Mean per-image PSNR/NMSE/SSIM over ``source`` plus an FPS measurement.

    ``fps_iters=None`` skips timing and reports FPS as NaN.
    """
    from .train import make_batch

    ps, ns, ss = [], [], []
    for start in range(0, len(source), batch_size):
        idx = list(range(start, min(start + batch_size, len(source))))
        x, y = make_batch(source, idx, degradation)
        pred = restore(net, x)
        ps.append(psnr(pred, y))
        ns.append(nmse(pred, y))
        ss.append(ssim(pred, y))
    ps, ns, ss = np.concatenate(ps), np.concatenate(ns), np.concatenate(ss)
    capped = int((ps == PSNR_CAP_DB).sum())
    if fps_iters is None:
        fps, threads, hw = float("nan"), get_threads(), hardware_string()
    else:
        res = measure_fps(net, warmup=fps_warmup, iters=fps_iters)
        fps, threads, hw = res.fps, res.threads, res.hardware
    return MetricsReport(
        model=label or net.config.label,
        psnr_db=float(ps.mean()),
        nmse=float(np.nanmean(ns)),
        ssim=float(ss.mean()),
        fps=fps,
        params=count_parameters(net).total,
        threads=threads,
        hardware=hw,
        psnr_capped=capped,
    )
