"""
How much information survives each encoder block
================================================

Histogram entropy (256 bins over each tensor's own range, in nats) is
measured on the input to every encoder block and after every conv unit
inside it.  Averaging consecutive differences per block gives one number
per block: strongly negative means the block throws information away.

Two untrained networks with the same main-path weights are compared here, so
only the auxiliary injections differ.
"""

import numpy as np

from vrae.analysis.entropy import entropy_csv, entropy_profile, feature_records, proxy_profile
from vrae.data import DegradationConfig, degrade
from vrae.model import VraeConfig, build_network
from vrae.synthetic import plate_images

ae = build_network(VraeConfig.reduced(3, "ae", size=64, scale=0.25), seed=0)
vrae = build_network(VraeConfig.reduced(3, "vrae", size=64, scale=0.25), seed=0)
shared = vrae.parameters()
for name, arr in ae.parameters().items():
    arr[...] = shared[name]

clean = plate_images(8, size=64, seed=5)
x = np.stack([degrade(c, DegradationConfig(), key=str(i)) for i, c in enumerate(clean)])

# per-layer view for the stem block
for rec in feature_records(vrae, x)[0]:
    print(f"layer {rec.layer}  dims {rec.dims}  H = {rec.entropy:.3f}")

profiles = [entropy_profile(ae, x), entropy_profile(vrae, x)]
print(entropy_csv(profiles))

# The closed-form proxy only looks at kernel sizes and each filter's
# top-left weight, so it is identical for both networks.
print("proxy", [f"{v:.1f}" for v in proxy_profile(vrae).avg_delta_h])
