"""Compute the smoothed box index from raw temperatures and find a warm event.

Builds a small absolute-SST cube by hand: a seasonal cycle everywhere,
plus a warm patch planted inside the index box for fourteen months. The
pipeline then runs exactly as it would on observations: per-calendar-month
climatology over a base period, anomalies, cos-lat area mean, 3-month
running mean, event classification. The planted event should come back
out with its dates intact.

Also round-trips the cube through the on-disk format to show the file
layout (a JSON header next to a raw float32 payload).
"""

from pathlib import Path

import numpy as np

from ensograph import (
    GridSpec,
    SstCube,
    anomalies,
    classify_events,
    climatology,
    load_cube,
    oni,
    save_cube,
)

rng = np.random.default_rng(0)
grid = GridSpec(
    lats=tuple(float(v) for v in range(-4, 5, 2)),
    lons=tuple(float(v) for v in range(190, 241, 2)),
)

n_time = 240  # twenty years from 1980-01
month_of = np.arange(n_time) % 12
seasonal = 26.0 + 1.5 * np.sin(2.0 * np.pi * month_of / 12.0)
values = seasonal[:, None, None] + 0.2 * rng.standard_normal(
    (n_time, grid.n_lat, grid.n_lon))

# plant a warm event: +1.2 degC over the whole box, 1997-05..1998-06
t0 = (1997 - 1980) * 12 + 4
values[t0: t0 + 14] += 1.2

cube = SstCube(grid, (1980, 1), values.astype(np.float32),
               np.zeros(values.shape, dtype=bool))

out = Path("demo_out")
out.mkdir(exist_ok=True)
meta = save_cube(cube, out / "planted")
payload = meta.with_suffix(".f32")
print(f"wrote {meta} ({meta.stat().st_size} bytes) and "
      f"{payload} ({payload.stat().st_size} bytes)")
cube = load_cube(meta)  # same cube back, validated

clim = climatology(cube, (1980, 1996))  # base period excludes the event
index = oni(anomalies(cube, clim))
print(f"index: {len(index)} months from "
      f"{index.start[0]}-{index.start[1]:02d}, k={index.k}")

events = classify_events(index, threshold=0.5, min_run=5)
for kind, (y0, m0), (y1, m1) in events:
    print(f"  {kind}: {y0}-{m0:02d} .. {y1}-{m1:02d}")

assert events, "the planted event should be detected"
kind, start, end = events[0]
print(f"\nplanted 1997-05..1998-06, recovered {start[0]}-{start[1]:02d}.."
      f"{end[0]}-{end[1]:02d} ({kind})")
