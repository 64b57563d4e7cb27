"""Procedural vehicle/plate-like test images for runs without a real corpus."""

from __future__ import annotations

import numpy as np


def plate_images(n: int, size: int = 64, seed: int = 0) -> np.ndarray:
    """``n`` RGB images (n, 3, size, size) in [0, 1]: a smooth colour field
    with a bright plate rectangle carrying dark glyph strokes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for k in range(n):
        base = rng.uniform(0.15, 0.6, size=3)
        tilt = rng.uniform(-0.2, 0.2, size=(3, 2))
        img = base[:, None, None] + tilt[:, :1, None] * yy + tilt[:, 1:, None] * xx
        h = int(size * rng.uniform(0.2, 0.3))
        w = int(size * rng.uniform(0.45, 0.65))
        top = int(rng.integers(size // 8, size - h - size // 8))
        left = int(rng.integers(size // 10, size - w - size // 10))
        img[:, top:top + h, left:left + w] = rng.uniform(0.8, 0.95)
        glyphs = int(rng.integers(4, 7))
        gw = max(1, w // (2 * glyphs + 1))
        for g in range(glyphs):
            x0 = left + (2 * g + 1) * gw
            y0, y1 = top + h // 5, top + h - h // 5
            img[:, y0:y1, x0:x0 + max(1, gw // 2 + 1)] = rng.uniform(0.05, 0.2)
        out[k] = np.clip(img, 0.0, 1.0)
    return out
