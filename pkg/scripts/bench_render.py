#!/usr/bin/env python3
"""Throughput baseline: render a full-size occupancy scene to one camera.

Builds the 200x200x16 half-meter grid (640k primitives) with random logits,
renders it into a 450x800 perspective view and reports per-stage and total
timings as JSON lines. The reference budget is two seconds per frame on a
desktop CPU.

Example:
    python scripts/bench_render.py --trials 5
"""

import argparse
import json
import math
import sys
import time

import numpy as np

from voxsplat.cameras import Camera, extrinsics_from, look_rotation
from voxsplat.gaussianize import gaussianize_prediction
from voxsplat.grid import GridGeometry, OccupancyGrid
from voxsplat.renderer import render


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--image", type=int, nargs=2, default=(800, 450), metavar=("W", "H"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    geom = GridGeometry((200, 200, 16), (-50.0, -50.0, -5.0), 0.5, 17, 0)
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    grid = OccupancyGrid(
        geom, logits=rng.uniform(-1.5, 1.5, size=(200, 200, 16, 17)).astype(np.float32))
    gset = gaussianize_prediction(grid)
    print(json.dumps({"event": "setup", "num_primitives": len(gset),
                      "seconds": round(time.perf_counter() - t0, 3)}), flush=True)

    w, h = args.image
    fx = w / (2.0 * math.tan(math.radians(35.0)))
    K = np.array([[fx, 0, w / 2], [0, fx, h / 2], [0, 0, 1.0]])
    cam = Camera(kind="pinhole", intrinsics=K,
                 extrinsics=extrinsics_from(look_rotation([1.0, 0.0, -0.25]), [0.0, 0.0, 8.0]),
                 image_size=(w, h), depth_range=(0.5, 150.0))

    render(cam, gset)  # compile + warm caches
    times = []
    for trial in range(args.trials):
        t0 = time.perf_counter()
        view = render(cam, gset)
        dt = time.perf_counter() - t0
        times.append(dt)
        print(json.dumps({"event": "render", "trial": trial, "seconds": round(dt, 4)}), flush=True)
    print(json.dumps({
        "event": "summary", "image": [w, h], "num_primitives": len(gset),
        "best_seconds": round(min(times), 4), "mean_seconds": round(float(np.mean(times)), 4),
        "budget_seconds": 2.0, "mean_residual_transmittance":
            round(float(view.residual_transmittance.mean()), 6),
    }), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
