"""Pixel loops for the splat rasterizer, compiled with numba.

Both kernels parallelize over image rows only. Each row owns its pixels
and its slice of the gradient buffer, and the host reduces row buffers in
fixed row order, so results are bit-identical for any worker-thread
count. Gaussians arrive pre-sorted front to back; per-pixel compositing
order is recovered by walking them in (reverse) array order.

Bookkeeping invariant: for every pixel, `n_touch` counts all bounding-box
visits and `n_proc` the prefix of visits made before transmittance fell
below the early-out threshold. A visit index below `n_proc` was processed
in the forward pass (blended unless its exponent guard tripped), which is
what lets the backward pass replay contributions without storing
per-pixel lists.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def composite_forward(mean_x, mean_y, conic_a, conic_b, conic_c, opacity, color,
                      depth_z, bx0, bx1, by0, by1, height, width, background,
                      min_transmittance, alpha_clamp):
    n = mean_x.shape[0]
    rgb = np.zeros((height, width, 3))
    t_end = np.ones((height, width))
    depth_num = np.zeros((height, width))
    n_proc = np.zeros((height, width), dtype=np.int32)
    n_touch = np.zeros((height, width), dtype=np.int32)
    for row in prange(height):
        t_row = np.ones(width)
        for g in range(n):
            if by0[g] > row or by1[g] < row:
                continue
            dy = row - mean_y[g]
            for px in range(bx0[g], bx1[g] + 1):
                n_touch[row, px] += 1
                t_cur = t_row[px]
                if t_cur < min_transmittance:
                    continue
                n_proc[row, px] += 1
                dx = px - mean_x[g]
                power = 0.5 * (conic_a[g] * dx * dx + conic_c[g] * dy * dy) \
                    + conic_b[g] * dx * dy
                if power < 0.0:
                    continue
                alpha = opacity[g] * np.exp(-power)
                if alpha > alpha_clamp:
                    alpha = alpha_clamp
                w = t_cur * alpha
                rgb[row, px, 0] += w * color[g, 0]
                rgb[row, px, 1] += w * color[g, 1]
                rgb[row, px, 2] += w * color[g, 2]
                depth_num[row, px] += w * depth_z[g]
                t_row[px] = t_cur * (1.0 - alpha)
        for px in range(width):
            t_end[row, px] = t_row[px]
            rgb[row, px, 0] += t_row[px] * background[0]
            rgb[row, px, 1] += t_row[px] * background[1]
            rgb[row, px, 2] += t_row[px] * background[2]
    return rgb, t_end, depth_num, n_proc, n_touch


@njit(cache=True, parallel=True)
def composite_backward(mean_x, mean_y, conic_a, conic_b, conic_c, opacity, color,
                       bx0, bx1, by0, by1, t_end, n_proc, n_touch, pixel_grad,
                       background, alpha_clamp):
    """Gradients of the composited rgb w.r.t. splat-space quantities.

    Returns a (height, n, 9) row buffer; caller sums over rows. Columns:
    d/d mean2d (2), d/d conic a,b,c (3), d/d activated opacity (1),
    d/d color (3).
    """
    n = mean_x.shape[0]
    height, width = t_end.shape
    buf = np.zeros((height, n, 9))
    for row in prange(height):
        t_row = t_end[row].copy()
        suffix = np.empty((width, 3))
        for px in range(width):
            suffix[px, 0] = t_end[row, px] * background[0]
            suffix[px, 1] = t_end[row, px] * background[1]
            suffix[px, 2] = t_end[row, px] * background[2]
        remaining = n_touch[row].copy()
        for g in range(n - 1, -1, -1):
            if by0[g] > row or by1[g] < row:
                continue
            dy = row - mean_y[g]
            for px in range(bx0[g], bx1[g] + 1):
                remaining[px] -= 1
                if remaining[px] >= n_proc[row, px]:
                    continue
                dx = px - mean_x[g]
                power = 0.5 * (conic_a[g] * dx * dx + conic_c[g] * dy * dy) \
                    + conic_b[g] * dx * dy
                if power < 0.0:
                    continue
                raw_alpha = opacity[g] * np.exp(-power)
                alpha = raw_alpha if raw_alpha < alpha_clamp else alpha_clamp
                one_minus = 1.0 - alpha
                t_front = t_row[px] / one_minus
                t_row[px] = t_front
                w = t_front * alpha
                pg0 = pixel_grad[row, px, 0]
                pg1 = pixel_grad[row, px, 1]
                pg2 = pixel_grad[row, px, 2]
                buf[row, g, 6] += pg0 * w
                buf[row, g, 7] += pg1 * w
                buf[row, g, 8] += pg2 * w
                d_alpha = (
                    pg0 * (t_front * color[g, 0] - suffix[px, 0] / one_minus)
                    + pg1 * (t_front * color[g, 1] - suffix[px, 1] / one_minus)
                    + pg2 * (t_front * color[g, 2] - suffix[px, 2] / one_minus)
                )
                suffix[px, 0] += w * color[g, 0]
                suffix[px, 1] += w * color[g, 1]
                suffix[px, 2] += w * color[g, 2]
                if raw_alpha < alpha_clamp:
                    gauss = np.exp(-power)
                    buf[row, g, 5] += d_alpha * gauss
                    d_power = -d_alpha * raw_alpha
                    buf[row, g, 2] += d_power * 0.5 * dx * dx
                    buf[row, g, 3] += d_power * dx * dy
                    buf[row, g, 4] += d_power * 0.5 * dy * dy
                    buf[row, g, 0] -= d_power * (conic_a[g] * dx + conic_b[g] * dy)
                    buf[row, g, 1] -= d_power * (conic_b[g] * dx + conic_c[g] * dy)
    return buf
