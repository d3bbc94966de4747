"""Numba inner loops of the tiled rasterizer.

Each tile owns a disjoint pixel block, so the parallel loops never write to
shared locations and the output is independent of the thread count. Pixel
(px, py) samples a splat at its center (px + 0.5, py + 0.5); a splat with
footprint radius r touches the pixel only when both |dx| and |dy| are <= r
(the same rule the naive reference renderer applies).

Per pixel, splats are visited front to back. A splat contributes when its
alpha (clamped at ``alpha_clamp``) reaches ``alpha_cutoff``; after a
contribution drops the transmittance below ``early_stop`` the pixel stops
compositing. The trace kernels record, per contribution, the primitive id,
alpha, the transmittance before it, and the raw Gaussian footprint value.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def forward_tiles(
    tile_start, tile_end, pair_row,
    u, v, ia, ib, ic, radius, depth, opac, probs,
    height, width, tile_size, tiles_x,
    alpha_cutoff, alpha_clamp, early_stop,
    sem, depth_map, resid,
):
    n_tiles = tile_start.shape[0]
    n_classes = probs.shape[1]
    for tid in prange(n_tiles):
        px0 = (tid % tiles_x) * tile_size
        py0 = (tid // tiles_x) * tile_size
        px1 = min(px0 + tile_size, width)
        py1 = min(py0 + tile_size, height)
        s0 = tile_start[tid]
        s1 = tile_end[tid]
        for py in range(py0, py1):
            cy = py + 0.5
            for px in range(px0, px1):
                cx = px + 0.5
                t = 1.0
                for k in range(s0, s1):
                    j = pair_row[k]
                    dx = cx - u[j]
                    dy = cy - v[j]
                    r = radius[j]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    power = -0.5 * (ia[j] * dx * dx + 2.0 * ib[j] * dx * dy + ic[j] * dy * dy)
                    alpha = opac[j] * np.exp(power)
                    if alpha > alpha_clamp:
                        alpha = alpha_clamp
                    if alpha < alpha_cutoff:
                        continue
                    w = t * alpha
                    for c in range(n_classes):
                        sem[py, px, c] += w * probs[j, c]
                    depth_map[py, px] += w * depth[j]
                    t *= 1.0 - alpha
                    if t < early_stop:
                        break
                resid[py, px] = t


@njit(parallel=True, cache=True)
def count_tiles(
    tile_start, tile_end, pair_row,
    u, v, ia, ib, ic, radius, opac,
    height, width, tile_size, tiles_x,
    alpha_cutoff, alpha_clamp, early_stop,
    counts,
):
    n_tiles = tile_start.shape[0]
    for tid in prange(n_tiles):
        px0 = (tid % tiles_x) * tile_size
        py0 = (tid // tiles_x) * tile_size
        px1 = min(px0 + tile_size, width)
        py1 = min(py0 + tile_size, height)
        s0 = tile_start[tid]
        s1 = tile_end[tid]
        for py in range(py0, py1):
            cy = py + 0.5
            for px in range(px0, px1):
                cx = px + 0.5
                t = 1.0
                n = 0
                for k in range(s0, s1):
                    j = pair_row[k]
                    dx = cx - u[j]
                    dy = cy - v[j]
                    r = radius[j]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    power = -0.5 * (ia[j] * dx * dx + 2.0 * ib[j] * dx * dy + ic[j] * dy * dy)
                    alpha = opac[j] * np.exp(power)
                    if alpha > alpha_clamp:
                        alpha = alpha_clamp
                    if alpha < alpha_cutoff:
                        continue
                    n += 1
                    t *= 1.0 - alpha
                    if t < early_stop:
                        break
                counts[py * width + px] = n


@njit(parallel=True, cache=True)
def forward_tiles_traced(
    tile_start, tile_end, pair_row,
    u, v, ia, ib, ic, radius, depth, opac, probs, prim_id,
    height, width, tile_size, tiles_x,
    alpha_cutoff, alpha_clamp, early_stop,
    offsets, tr_prim, tr_alpha, tr_tbefore, tr_gval,
    sem, depth_map, resid,
):
    n_tiles = tile_start.shape[0]
    n_classes = probs.shape[1]
    for tid in prange(n_tiles):
        px0 = (tid % tiles_x) * tile_size
        py0 = (tid // tiles_x) * tile_size
        px1 = min(px0 + tile_size, width)
        py1 = min(py0 + tile_size, height)
        s0 = tile_start[tid]
        s1 = tile_end[tid]
        for py in range(py0, py1):
            cy = py + 0.5
            for px in range(px0, px1):
                cx = px + 0.5
                t = 1.0
                pos = offsets[py * width + px]
                for k in range(s0, s1):
                    j = pair_row[k]
                    dx = cx - u[j]
                    dy = cy - v[j]
                    r = radius[j]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    power = -0.5 * (ia[j] * dx * dx + 2.0 * ib[j] * dx * dy + ic[j] * dy * dy)
                    gval = np.exp(power)
                    alpha = opac[j] * gval
                    if alpha > alpha_clamp:
                        alpha = alpha_clamp
                    if alpha < alpha_cutoff:
                        continue
                    tr_prim[pos] = prim_id[j]
                    tr_alpha[pos] = alpha
                    tr_tbefore[pos] = t
                    tr_gval[pos] = gval
                    pos += 1
                    w = t * alpha
                    for c in range(n_classes):
                        sem[py, px, c] += w * probs[j, c]
                    depth_map[py, px] += w * depth[j]
                    t *= 1.0 - alpha
                    if t < early_stop:
                        break
                resid[py, px] = t
