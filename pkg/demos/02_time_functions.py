#!/usr/bin/env python3
"""Turn one raw signature into its 23 per-sample time functions.

Each signature becomes a T x 23 matrix: coordinates and pressure, their
first and second derivatives, path-tangent angle, velocity, curvature
and friends, all z-score normalized per signature. A couple of sanity
checks show the columns mean what their names claim.
"""

import numpy as np

from sigver.features import FEATURE_NAMES, extract_features
from sigver.synth import SynthConfig, generate_records

records = generate_records(SynthConfig(n_users=1, max_duration=2.0, seed=3))
record = records[0]
seq = extract_features(record)

print(f"{record.key}: {len(record)} samples -> {seq.values.shape} feature matrix\n")

print("columns:")
for i, name in enumerate(FEATURE_NAMES, 1):
    print(f"  {i:2d}  {name}")

col = {name: i for i, name in enumerate(FEATURE_NAMES)}
values = seq.values

# every column is z-scored, so means are ~0 and variances ~1
print("\nmax |column mean| :", float(np.abs(values.mean(axis=0)).max()))
print("column std range  :", float(values.std(axis=0).min()), "..",
      float(values.std(axis=0).max()))

# velocity is the root of the two first derivatives, before normalization;
# after z-scoring the correlation still gives it away
dx, dy, v = (values[:, col[c]] for c in ("dx", "dy", "v"))
speed = np.hypot(dx - dx.mean(), dy - dy.mean())
print("corr(v, |(dx, dy)|) :", float(np.corrcoef(v, speed)[0, 1]))

raw = extract_features(record, normalize=False)
print("\nunnormalized pressure column matches the tablet levels:",
      int(raw.values[:, col["p"]].max()), "max of",
      int(record.pressure.max()))
