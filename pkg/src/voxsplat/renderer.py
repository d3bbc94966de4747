"""Differentiable tile-based Gaussian-splatting rasterizer.

Forward: project every primitive to an elliptical 2D footprint, depth-sort
(front to back, ties broken by primitive index), bin into pixel tiles and
alpha-composite semantics and depth per pixel. Unabsorbed transmittance is
folded into the empty class and the camera's far depth, so the semantic
planes of every pixel form a convex combination.

Backward: an exact adjoint of the compositing sum. Gradients flow only to
class probabilities and opacities; centers and scales are fixed by
construction. The compositing trace saved in the forward pass makes the
adjoint a single reverse sweep per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cameras import Camera, ORTHOGRAPHIC, PINHOLE
from .gaussianize import GaussianPrimitive, GaussianSet

# Covariance floor added to the projected diagonal (pixels^2); keeps the 2D
# covariance invertible and stops sub-pixel splats from vanishing.
LOW_PASS = 0.3


@dataclass(frozen=True)
class RenderOptions:
    alpha_cutoff: float = 1.0 / 255.0
    alpha_clamp: float = 0.99
    early_stop: float = 1e-4   # stop compositing a pixel below this transmittance
    tile_size: int = 16
    record_trace: bool = False


@dataclass(frozen=True)
class Splat2D:
    """A primitive projected into one camera."""

    mu2d: np.ndarray          # (2,) pixel coordinates of the center
    sigma2d: np.ndarray       # (2, 2) projected covariance, pixels^2, floor applied
    depth: float              # view-space z, meters
    primitive_id: int
    footprint_radius: float   # 3-sigma bound, pixels


@dataclass
class CompositeTrace:
    """Saved compositing state for the backward pass.

    Entries are stored per pixel in row-major order; pixel p owns the slice
    [offsets[p], offsets[p+1]). ``class_probs``/``opacity`` reference the
    rendered set and ``view_depth`` holds each primitive's view z (zero for
    primitives culled before rasterization; they never appear in entries).
    """

    offsets: np.ndarray      # (H*W + 1,) int64
    prim_ids: np.ndarray     # (K,) int64
    alphas: np.ndarray       # (K,)
    t_before: np.ndarray     # (K,) transmittance before the entry
    g_vals: np.ndarray       # (K,) Gaussian footprint value (alpha before opacity/clamp)
    class_probs: np.ndarray  # (N, C)
    opacity: np.ndarray      # (N,)
    view_depth: np.ndarray   # (N,)
    num_primitives: int
    empty_class: int
    far: float
    alpha_clamp: float


@dataclass
class RenderedView:
    sem: np.ndarray                      # (H, W, C) class-probability planes
    depth: np.ndarray                    # (H, W) meters
    residual_transmittance: np.ndarray   # (H, W) in [0, 1]
    trace: CompositeTrace | None = None


@dataclass
class GradientBuffers:
    d_class_probs: np.ndarray  # (N, C)
    d_opacity: np.ndarray      # (N,)


def project_gaussian(cam: Camera, prim: GaussianPrimitive, low_pass: float = LOW_PASS) -> Splat2D | None:
    """Project a single primitive; None when culled.

    The projected covariance is J R Sigma3D R^T J^T with J the Jacobian of
    the camera map at the primitive center (for a pinhole camera the affine
    approximation of the perspective division). Culling drops primitives
    behind the near plane and footprints that miss the image.
    """
    R = cam.rotation
    p = R @ np.asarray(prim.mu, dtype=np.float64) + cam.translation
    near = cam.depth_range[0]
    K = cam.intrinsics
    if cam.kind == PINHOLE:
        if p[2] <= near:
            return None
        z = p[2]
        fx, fy = K[0, 0], K[1, 1]
        uv = np.array([fx * p[0] / z + K[0, 2], fy * p[1] / z + K[1, 2]])
        J = np.array([
            [fx / z, 0.0, -fx * p[0] / (z * z)],
            [0.0, fy / z, -fy * p[1] / (z * z)],
        ])
    else:
        if p[2] < near:
            return None
        sx, sy = K[0, 0], K[1, 1]
        uv = np.array([sx * p[0] + K[0, 2], sy * p[1] + K[1, 2]])
        J = np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0]])

    sigma3d = (prim.scale ** 2) * np.eye(3)
    cov = J @ R @ sigma3d @ R.T @ J.T + low_pass * np.eye(2)
    mid = 0.5 * (cov[0, 0] + cov[1, 1])
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    lam_max = mid + np.sqrt(max(mid * mid - det, 0.0))
    r = 3.0 * np.sqrt(lam_max)
    w, h = cam.image_size
    if uv[0] + r < 0 or uv[0] - r > w or uv[1] + r < 0 or uv[1] - r > h:
        return None
    return Splat2D(
        mu2d=uv,
        sigma2d=cov,
        depth=float(p[2]),
        primitive_id=prim.source_index,
        footprint_radius=float(r),
    )


def _project_splats(cam: Camera, gset: GaussianSet, opts: RenderOptions) -> dict:
    """Vectorized projection + culling; survivors sorted front to back.

    Depth ties are broken by ascending primitive index so the compositing
    order is a total order and images are independent of input permutation.
    """
    n = len(gset)
    R = cam.rotation
    p = gset.mu @ R.T + cam.translation  # (N, 3) camera space
    z = p[:, 2]
    K = cam.intrinsics
    near = cam.depth_range[0]
    s2 = gset.scale ** 2

    keep = gset.opacity >= opts.alpha_cutoff if opts.alpha_cutoff > 0 else np.ones(n, bool)
    if cam.kind == PINHOLE:
        keep = keep & (z > near)
        zs = np.where(z > 0, z, 1.0)  # placeholder for culled rows
        fx, fy = K[0, 0], K[1, 1]
        u = fx * p[:, 0] / zs + K[0, 2]
        v = fy * p[:, 1] / zs + K[1, 2]
        jxx = fx / zs
        jxz = -fx * p[:, 0] / (zs * zs)
        jyy = fy / zs
        jyz = -fy * p[:, 1] / (zs * zs)
        # isotropic Sigma3D makes J R Sigma R^T J^T collapse to s^2 J J^T
        a = s2 * (jxx * jxx + jxz * jxz) + LOW_PASS
        b = s2 * (jxz * jyz)
        c = s2 * (jyy * jyy + jyz * jyz) + LOW_PASS
    else:
        keep = keep & (z >= near)
        sx, sy = K[0, 0], K[1, 1]
        u = sx * p[:, 0] + K[0, 2]
        v = sy * p[:, 1] + K[1, 2]
        a = np.full(n, s2 * sx * sx + LOW_PASS)
        b = np.zeros(n)
        c = np.full(n, s2 * sy * sy + LOW_PASS)

    mid = 0.5 * (a + c)
    det = a * c - b * b
    radius = 3.0 * np.sqrt(mid + np.sqrt(np.maximum(mid * mid - det, 0.0)))
    w_img, h_img = cam.image_size
    keep = keep & (u + radius >= 0) & (u - radius <= w_img) & (v + radius >= 0) & (v - radius <= h_img)

    ids = np.nonzero(keep)[0]
    # ties broken by the primitive's own identity, so compositing order is
    # independent of the input permutation
    order = np.lexsort((gset.source_index[ids], z[ids]))
    ids = ids[order]
    return {
        "ids": ids.astype(np.int64),
        "u": np.ascontiguousarray(u[ids]),
        "v": np.ascontiguousarray(v[ids]),
        "a": np.ascontiguousarray(a[ids]),
        "b": np.ascontiguousarray(b[ids]),
        "c": np.ascontiguousarray(c[ids]),
        "det": np.ascontiguousarray(det[ids]),
        "radius": np.ascontiguousarray(radius[ids]),
        "depth": np.ascontiguousarray(z[ids]),
        "opacity": np.ascontiguousarray(gset.opacity[ids]),
    }


def _bin_tiles(proj: dict, width: int, height: int, tile_size: int) -> tuple:
    """Assign sorted splats to the tiles their bounding box overlaps.

    Pairs are emitted in splat (depth) order, so a stable sort on the tile
    id alone leaves each tile's list depth-sorted.
    """
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    n_tiles = tiles_x * tiles_y
    u, v, r = proj["u"], proj["v"], proj["radius"]
    tx0 = np.clip(np.floor((u - r) / tile_size).astype(np.int32), 0, tiles_x - 1)
    tx1 = np.clip(np.floor((u + r) / tile_size).astype(np.int32), 0, tiles_x - 1)
    ty0 = np.clip(np.floor((v - r) / tile_size).astype(np.int32), 0, tiles_y - 1)
    ty1 = np.clip(np.floor((v + r) / tile_size).astype(np.int32), 0, tiles_y - 1)
    nx = tx1 - tx0 + 1
    counts = nx * (ty1 - ty0 + 1)
    offs = np.zeros(u.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=offs[1:])
    total = int(offs[-1])
    rows = np.repeat(np.arange(u.shape[0], dtype=np.int32), counts)
    within = (np.arange(total, dtype=np.int64) - offs[rows]).astype(np.int32)
    nx_r = nx[rows]
    tile_id = (ty0[rows] + within // nx_r) * tiles_x + (tx0[rows] + within % nx_r)
    order = np.argsort(tile_id, kind="stable")
    pair_row = rows[order]
    tile_counts = np.bincount(tile_id, minlength=n_tiles)
    tile_end = np.cumsum(tile_counts)
    tile_start = tile_end - tile_counts
    return pair_row, tile_start.astype(np.int64), tile_end.astype(np.int64), tiles_x


def render(cam: Camera, gset: GaussianSet, opts: RenderOptions = RenderOptions()) -> RenderedView:
    """Rasterize a Gaussian set into semantic, depth and transmittance maps."""
    width, height = cam.image_size
    n_classes = gset.class_probs.shape[1]
    empty = gset.geometry.empty_class
    far = cam.depth_range[1]

    sem = np.zeros((height, width, n_classes))
    depth_map = np.zeros((height, width))
    resid = np.ones((height, width))

    proj = _project_splats(cam, gset, opts)
    m = proj["ids"].shape[0]
    trace = None

    if m > 0:
        idet = proj["det"]
        ia = proj["c"] / idet
        ib = -proj["b"] / idet
        ic = proj["a"] / idet
        probs = np.ascontiguousarray(gset.class_probs[proj["ids"]], dtype=np.float64)
        pair_row, tile_start, tile_end, tiles_x = _bin_tiles(proj, width, height, opts.tile_size)
        args = (
            tile_start, tile_end, pair_row,
            proj["u"], proj["v"], ia, ib, ic, proj["radius"],
        )
        if not opts.record_trace:
            _kernels.forward_tiles(
                *args, proj["depth"], proj["opacity"], probs,
                height, width, opts.tile_size, tiles_x,
                opts.alpha_cutoff, opts.alpha_clamp, opts.early_stop,
                sem, depth_map, resid,
            )
        else:
            counts = np.zeros(height * width, dtype=np.int64)
            _kernels.count_tiles(
                *args, proj["opacity"],
                height, width, opts.tile_size, tiles_x,
                opts.alpha_cutoff, opts.alpha_clamp, opts.early_stop,
                counts,
            )
            offsets = np.zeros(height * width + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            k = int(offsets[-1])
            tr_prim = np.zeros(k, dtype=np.int64)
            tr_alpha = np.zeros(k)
            tr_tbefore = np.zeros(k)
            tr_gval = np.zeros(k)
            _kernels.forward_tiles_traced(
                *args, proj["depth"], proj["opacity"], probs, proj["ids"],
                height, width, opts.tile_size, tiles_x,
                opts.alpha_cutoff, opts.alpha_clamp, opts.early_stop,
                offsets, tr_prim, tr_alpha, tr_tbefore, tr_gval,
                sem, depth_map, resid,
            )
            view_depth = np.zeros(len(gset))
            view_depth[proj["ids"]] = proj["depth"]
            trace = CompositeTrace(
                offsets=offsets, prim_ids=tr_prim, alphas=tr_alpha,
                t_before=tr_tbefore, g_vals=tr_gval,
                class_probs=gset.class_probs, opacity=gset.opacity,
                view_depth=view_depth, num_primitives=len(gset),
                empty_class=empty, far=far, alpha_clamp=opts.alpha_clamp,
            )
    elif opts.record_trace:
        trace = CompositeTrace(
            offsets=np.zeros(height * width + 1, dtype=np.int64),
            prim_ids=np.zeros(0, dtype=np.int64),
            alphas=np.zeros(0), t_before=np.zeros(0), g_vals=np.zeros(0),
            class_probs=gset.class_probs, opacity=gset.opacity,
            view_depth=np.zeros(len(gset)), num_primitives=len(gset),
            empty_class=empty, far=far, alpha_clamp=opts.alpha_clamp,
        )

    sem[:, :, empty] += resid
    depth_map += resid * far
    return RenderedView(sem=sem, depth=depth_map, residual_transmittance=resid, trace=trace)


def render_backward(view: RenderedView, d_sem: np.ndarray, d_depth: np.ndarray) -> GradientBuffers:
    """Exact adjoint of the compositing pass.

    For entry i of a pixel, the loss responds to its alpha directly through
    the contribution T_i alpha_i v_i and, through the downstream
    transmittances, by -S_i / (1 - alpha_i) where S_i is the weighted sum of
    everything composited after i (background included). Opacity gradients
    stop at clamped entries; class gradients are the contribution weights.
    """
    tr = view.trace
    if tr is None:
        raise ValueError("view was rendered without a composite trace")
    n, n_classes = tr.class_probs.shape
    d_cp = np.zeros((n, n_classes))
    d_op = np.zeros(n)
    k = tr.prim_ids.shape[0]
    h, w = view.depth.shape
    if d_sem.shape != (h, w, n_classes) or d_depth.shape != (h, w):
        raise ValueError("upstream gradient shapes do not match the view")
    if k == 0:
        return GradientBuffers(d_cp, d_op)

    ds = np.ascontiguousarray(d_sem, dtype=np.float64).reshape(h * w, n_classes)
    dd = np.ascontiguousarray(d_depth, dtype=np.float64).reshape(h * w)
    pix = np.repeat(np.arange(h * w), np.diff(tr.offsets))
    prim = tr.prim_ids

    # per-entry upstream value v = <d_sem, c> + d_depth * view_z
    v_entry = np.einsum("kc,kc->k", ds[pix], tr.class_probs[prim]) + dd[pix] * tr.view_depth[prim]
    weight = tr.t_before * tr.alphas
    wv = weight * v_entry

    # suffix sum of wv within each pixel segment, then the background term
    cs = np.cumsum(wv)
    seg_last = tr.offsets[pix + 1] - 1
    suffix = cs[seg_last] - cs[np.arange(k)]
    t_bg = view.residual_transmittance.reshape(-1)
    v_bg = ds[:, tr.empty_class] + dd * tr.far
    s_after = suffix + (t_bg * v_bg)[pix]

    d_alpha = tr.t_before * v_entry - s_after / (1.0 - tr.alphas)
    unclamped = tr.alphas < tr.alpha_clamp
    np.add.at(d_op, prim, np.where(unclamped, d_alpha * tr.g_vals, 0.0))
    np.add.at(d_cp, prim, weight[:, None] * ds[pix])
    return GradientBuffers(d_cp, d_op)
