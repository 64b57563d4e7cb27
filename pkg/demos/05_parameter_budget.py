"""
What the auxiliary path costs
=============================

Each auxiliary block is a pooled 3x3 convolution from the RGB input to the
width of one main stage, plus batch-norm scale and shift: 27*C + 2*C
parameters.  Against a ResNet-50 trunk this is well under one percent.
"""

from vrae.model import VraeConfig, build_network, count_parameters

print(f"{'k':>2} {'AE':>12} {'VRAE':>12} {'aux':>8} {'overhead':>9}")
for k in (2, 3, 4, 5):
    a = count_parameters(build_network(VraeConfig(depth=k, arch="ae")))
    v = count_parameters(build_network(VraeConfig(depth=k)))
    print(f"{k:>2} {a.total:>12,} {v.total:>12,} {v.auxiliary:>8,} {100 * (v.total / a.total - 1):>8.3f}%")

# breakdown of the deepest model
v = count_parameters(build_network(VraeConfig(depth=5)))
print(f"VRAE5: main {v.main:,}  auxiliary {v.auxiliary:,}  decoder {v.decoder:,}")
