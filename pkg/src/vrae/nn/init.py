from __future__ import annotations

import numpy as np


def init_parameters(rules: dict[str, tuple], seed: int) -> None:
    """Fill parameter arrays in place, in registry order.

    ``rules`` maps a parameter name to ``(array, kind, arg[, gain])``:

    - ``"kaiming"``: normal with std ``gain * sqrt(2 / arg)``, ``arg`` = fan-in
    - ``"constant"``: every entry set to ``arg``
    - ``"ones"`` / ``"zeros"``
    """
    rng = np.random.default_rng(seed)
    for name, (arr, kind, arg, *rest) in rules.items():
        if kind == "kaiming":
            gain = rest[0] if rest else 1.0
            # draw in float64 so float32 and float64 builds share values
            arr[...] = rng.standard_normal(arr.shape) * (gain * np.sqrt(2.0 / arg))
        elif kind == "constant":
            arr[...] = arg
        elif kind == "ones":
            arr[...] = 1
        elif kind == "zeros":
            arr[...] = 0
        else:
            raise ValueError(f"unknown init kind {kind!r} for {name}")
