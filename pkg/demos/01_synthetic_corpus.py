#!/usr/bin/env python3
"""Generate a small synthetic signature corpus and look inside it.

The generator writes one directory per user with genuine signatures
from four acquisition sessions plus practiced forgeries, all in the
plain-text SVC format (a sample count line, then x y t button pressure
rows). Everything is derived from one seed, so re-running this script
reproduces the corpus byte for byte.
"""

import sys
import tempfile
from pathlib import Path

from sigver.svc import parse_svc
from sigver.synth import SynthConfig, generate

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())

cfg = SynthConfig(n_users=3, max_duration=2.0, seed=7)
n_users, n_files = generate(cfg, out)
print(f"wrote {n_files} files for {n_users} users under {out}\n")

print("per-user layout:")
for path in sorted((out / "u000").iterdir())[:6]:
    print("   ", path.name)
print("    ...\n")

record = parse_svc((out / "u000" / "genuine_1_00.svc").read_bytes(),
                   user_id="u000")
print(f"u000/genuine_1_00.svc: {len(record)} samples, "
      f"{record.timestamp[-1] - record.timestamp[0]} ms")
print(f"pen-up samples: {(~record.pen_down).sum()} "
      f"(pressure there is {record.pressure[~record.pen_down].max()})")
print(f"x range {record.x.min()}..{record.x.max()}, "
      f"y range {record.y.min()}..{record.y.max()}")

forgery = parse_svc((out / "u000" / "forgery_1_00.svc").read_bytes(),
                    user_id="u000")
print(f"\nthe forgery is plausible but sloppier: {len(forgery)} samples, "
      f"x range {forgery.x.min()}..{forgery.x.max()}")
