"""Feature-map entropy diagnostics.

Entropies are histogram estimates in nats: 256 uniform bins spanning each
tensor's own [min, max].
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..model import VraeNetwork

log = logging.getLogger(__name__)

DEFAULT_BINS = 256
C11_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureRecord:
    layer: int
    block: int
    layers_in_block: int
    dims: tuple[int, int, int]
    entropy: float


@dataclass
class EntropyProfile:
    model: str
    avg_delta_h: list[float]


def histogram_entropy(values: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("entropy of an empty tensor is undefined")
    lo, hi = v.min(), v.max()
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / v.size
    return float(-(p * np.log(p)).sum())


def entropy_change(records: Sequence[FeatureRecord | float]) -> list[float]:
    """Differences of consecutive entropies, H(F_{l+1}) - H(F_l)."""
    h = [r.entropy if isinstance(r, FeatureRecord) else float(r) for r in records]
    if len(h) < 2:
        raise ValueError("entropy change needs at least two layers")
    return [b - a for a, b in zip(h, h[1:])]


def proxy_entropy_change(h: int, w: int, p: int, q: int, c11: float) -> float | None:
    """Closed-form estimate (h-p+1)(w-q+1) ln|c11| for one conv layer.

    Returns None when |c11| is too small for the logarithm to be meaningful.
    """
    if h < p or w < q:
        raise ValueError(f"kernel {p}x{q} larger than the {h}x{w} feature map")
    if abs(c11) <= C11_FLOOR:
        log.warning("proxy entropy undefined for c11=%g; excluded", c11)
        return None
    return (h - p + 1) * (w - q + 1) * math.log(abs(c11))


def block_average(groups: Sequence[Sequence[float | None]], model: str = "") -> EntropyProfile:
    """Mean over each block's layer-wise changes; None entries are skipped."""
    out = []
    for k, group in enumerate(groups, start=1):
        vals = [v for v in group if v is not None]
        if not vals:
            raise ValueError(f"block {k} has no usable entropy changes")
        out.append(sum(vals) / len(vals))
    return EntropyProfile(model, out)


def feature_records(net: VraeNetwork, x: np.ndarray, bins: int = DEFAULT_BINS) -> list[list[FeatureRecord]]:
    """Per encoder block: the block input followed by each conv unit output."""
    _, trace = net.forward(x, capture_trace=True)
    out, layer = [], 0
    for b, feats in enumerate(trace.block_features, start=1):
        m = len(feats) - 1
        recs = []
        for f in feats:
            recs.append(FeatureRecord(layer, b, m, tuple(f.shape[1:]), histogram_entropy(f, bins)))
            layer += 1
        out.append(recs)
    return out


def entropy_profile(net: VraeNetwork, x: np.ndarray, label: str | None = None,
                    bins: int = DEFAULT_BINS) -> EntropyProfile:
    blocks = feature_records(net, x, bins)
    return block_average([entropy_change(recs) for recs in blocks], label or net.config.label)


def proxy_profile(net: VraeNetwork, label: str | None = None) -> EntropyProfile:
    """Block averages of the closed-form proxy over each main-path conv layer."""
    groups = []
    for block in net.conv_layers():
        vals = []
        for conv in block:
            p, q = conv.spec.kernel
            hin, win = _conv_input_hw(net, conv)
            vals.append(proxy_entropy_change(hin, win, p, q, float(conv.weight[0, 0, 0, 0])))
        groups.append(vals)
    return block_average(groups, label or net.config.label)


def _conv_input_hw(net: VraeNetwork, conv) -> tuple[int, int]:
    cfg = net.config
    name = conv.name
    if name == "main.1.conv":
        return cfg.input_hw
    stage, block = (int(t) for t in name.split(".")[1:3])
    _, sh, sw = cfg.stage_shape(stage)
    if stage > 2 and block == 0 and name.endswith(("conv1", "conv2")):
        return sh * 2, sw * 2
    return sh, sw


def entropy_csv(profiles: Sequence[EntropyProfile]) -> str:
    buf = io.StringIO()
    buf.write("model,block,avg_delta_h\n")
    for prof in profiles:
        for k, v in enumerate(prof.avg_delta_h, start=1):
            buf.write(f"{prof.model},{k},{v:.10f}\n")
    return buf.getvalue()
