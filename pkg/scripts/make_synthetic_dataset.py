#!/usr/bin/env python3
"""Generate the synthetic plane dataset to a directory.

Writes scene.ply (the degraded initial scene), cameras.json, gt/ images
rendered from the clean scene, corrupted targets/ for the novel views,
and masks/ marking the corrupted pixels. The layout is exactly what the
file-provider pipeline commands consume.
"""

import argparse
from pathlib import Path

import numpy as np

from confix.io import save_cameras, save_scene
from confix.images import save_png
from confix.providers import GT_NAME, MASK_NAME, TARGET_NAME, CorruptionConfig
from confix.synthetic import build_benchmark


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, help="dataset directory to create")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--views", type=int, default=50)
    ap.add_argument("--size", type=int, default=64, help="image width and height")
    ap.add_argument("--gaussians", type=int, default=2000)
    ap.add_argument("--color-noise", type=float, default=0.15,
                    help="initial-scene color degradation amplitude")
    ap.add_argument("--patch-count", type=int, default=5)
    ap.add_argument("--patch-size", type=int, default=32)
    ap.add_argument("--patch-shift", type=float, default=0.5)
    ap.add_argument("--blur-sigma", type=float, default=0.0)
    args = ap.parse_args()

    corruption = CorruptionConfig(
        blur_sigma=args.blur_sigma, patch_count=args.patch_count,
        patch_size=args.patch_size, patch_color_shift=args.patch_shift,
        rng_seed=args.seed,
    )
    bench = build_benchmark(
        seed=args.seed, n_gaussians=args.gaussians, view_count=args.views,
        width=args.size, height=args.size, color_noise=args.color_noise,
        corruption=corruption,
    )

    out = args.out
    (out / "gt").mkdir(parents=True, exist_ok=True)
    (out / "targets").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    save_scene(out / "scene.ply", bench.initial_scene)
    save_cameras(out / "cameras.json", bench.views)
    for view in bench.views:
        vid = view.view_id
        save_png(out / "gt" / GT_NAME.format(vid), bench.gt_images[vid])
        if not view.is_support:
            save_png(out / "targets" / TARGET_NAME.format(vid), bench.targets.images[vid])
            save_png(out / "masks" / MASK_NAME.format(vid),
                     bench.masks[vid].astype(np.float64))
    novel = sum(1 for v in bench.views if not v.is_support)
    print(f"{out}: {len(bench.views)} views ({novel} novel), "
          f"{len(bench.initial_scene)} Gaussians")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
