#!/usr/bin/env python3
"""Draw DET curves from a det.csv written by the evaluate command.

DET convention: false rejection against false acceptance, both axes on
a normal-deviate scale so that Gaussian-ish score distributions become
straight lines. The equal-error diagonal is dotted. Requires
matplotlib (``pip install sigver[plots]``).
"""

import csv
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is not installed; get it with: pip install matplotlib")

if len(sys.argv) < 2:
    sys.exit("usage: plot_det.py DET_CSV [OUT_PNG]")
det_path = Path(sys.argv[1])
out_path = Path(sys.argv[2]) if len(sys.argv) > 2 else det_path.with_suffix(".png")

curves: dict = {}
with open(det_path) as fh:
    for row in csv.DictReader(fh):
        key = (row["system"], row["protocol"])
        curves.setdefault(key, []).append((float(row["far"]), float(row["frr"])))
if not curves:
    sys.exit(f"{det_path} has no operating points")


def deviate(p: np.ndarray) -> np.ndarray:
    # clip away exact 0/1 so the probit stays finite at the endpoints
    return norm.ppf(np.clip(p, 1e-4, 1.0 - 1e-4))


fig, ax = plt.subplots(figsize=(6, 6))
ticks = np.array([0.001, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95])
for (system, protocol), points in sorted(curves.items()):
    far, frr = np.array(points).T
    style = "-" if system == "proposed" else "--"
    ax.plot(deviate(far), deviate(frr), style, label=f"{system} {protocol}")

lim = deviate(np.array([0.001, 0.95]))
ax.plot(lim, lim, ":", color="gray", linewidth=1)  # the EER diagonal
ax.set_xticks(deviate(ticks))
ax.set_xticklabels([f"{t:g}" for t in ticks])
ax.set_yticks(deviate(ticks))
ax.set_yticklabels([f"{t:g}" for t in ticks])
ax.set_xlim(lim)
ax.set_ylim(lim)
ax.set_xlabel("false acceptance rate")
ax.set_ylabel("false rejection rate")
ax.grid(True, linewidth=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(out_path, dpi=120)
print(f"wrote {out_path}")
