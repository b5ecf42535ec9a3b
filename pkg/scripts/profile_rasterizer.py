#!/usr/bin/env python3
"""Time the rasterizer forward and backward passes.

Renders the synthetic plane scene at a few sizes and reports wall time
per pass after a warm-up render that triggers kernel compilation.
"""

import argparse
import time

import numpy as np

from confix.rasterizer import GradientBundle, render, render_backward
from confix.synthetic import make_plane_scene, make_plane_views


def time_passes(scene, cam, reps):
    out = render(scene, cam)  # warm-up also provides the blend state
    pixel_grad = np.ones_like(out.rgb)
    render_backward(scene, cam, out.blend_state, pixel_grad)

    t0 = time.perf_counter()
    for _ in range(reps):
        out = render(scene, cam)
    t1 = time.perf_counter()
    for _ in range(reps):
        grads = render_backward(scene, cam, out.blend_state, pixel_grad)
    t2 = time.perf_counter()
    assert isinstance(grads, GradientBundle)
    return (t1 - t0) / reps, (t2 - t1) / reps


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gaussians", type=int, default=2000)
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    scene = make_plane_scene(args.gaussians, rng=rng)
    print(f"{len(scene)} Gaussians, {args.reps} reps per size")
    for size in args.sizes:
        cam = make_plane_views(count=1, width=size, height=size)[0]
        fwd, bwd = time_passes(scene, cam, args.reps)
        print(f"{size:4d}x{size:<4d}  forward {fwd * 1e3:8.2f} ms   "
              f"backward {bwd * 1e3:8.2f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
