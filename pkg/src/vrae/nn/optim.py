from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place to ``params``."""
    missing = sorted(set(params) - set(grads))
    if missing:
        raise KeyError(f"no gradient for parameter(s): {', '.join(missing[:5])}")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {grads[name].shape}, expected {p.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)).astype(p.dtype, copy=False)
    return params, state
