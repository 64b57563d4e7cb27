"""Vertical residual autoencoders for vehicle/licence-plate image restoration.

A numpy implementation covering the network (``vrae.model``), its training
loop, the synthetic degradation pipeline, quality metrics and the entropy /
Pareto diagnostics used to compare VRAE-k against plain AE-k baselines.
"""

__version__ = "0.1.0"

from .model import ForwardTrace, VraeConfig, VraeNetwork, build_network, count_parameters, forward  # noqa: E402

__all__ = ["ForwardTrace", "VraeConfig", "VraeNetwork", "build_network", "count_parameters", "forward"]
