"""Brute-force reference implementations used by tests and the verify gate.

Three independent checks of the fast renderer:
  - a single-loop full-sort splat compositor (tile correctness),
  - a volumetric ray-marching renderer that integrates density along pixel
    rays (agreement expected only in the opaque-surface limit, so the
    tolerance is expressed in voxels),
  - a central-finite-difference probe of the end-to-end loss gradients.

These paths favor auditability over speed on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cameras import Camera, PINHOLE, pixel_rays
from .gaussianize import GaussianSet
from .grid import OccupancyGrid
from .losses import l2d
from .renderer import RenderedView, RenderOptions, _project_splats

# Optical depth accumulated by a head-on pass through a single fully opaque
# Gaussian: 3 leaves ~5% transmittance. Larger gains shift the volumetric
# surface toward the near tail of the Gaussian and away from the splat
# convention of compositing at the center depth.
DENSITY_GAIN = 3.0

# Gradient probes run with the hard thresholds disabled: alpha cutoff and
# transmittance early-stop are step discontinuities of the forward map, and
# finite differences straddling one would not measure the derivative.
GRADCHECK_RENDER_OPTIONS = RenderOptions(alpha_cutoff=0.0, early_stop=0.0, record_trace=True)


@dataclass(frozen=True)
class OracleConfig:
    step_size: float = 0.05        # ray-marching step, meters; keep well below the Gaussian scale
    fd_epsilon: float = 1e-3       # logit perturbation for finite differences
    abs_tol: float = 1e-8
    rel_tol: float = 1e-4

    def __post_init__(self):
        if self.step_size <= 0 or self.fd_epsilon <= 0:
            raise ValueError("step_size and fd_epsilon must be positive")


def naive_splat(cam: Camera, gset: GaussianSet, opts: RenderOptions = RenderOptions()) -> RenderedView:
    """Single-loop splat compositor, mathematically identical to render().

    Splats are fully sorted and composited one at a time over their pixel
    bounding boxes with the exact same coverage, cutoff, clamp and
    early-stop rules as the tiled kernels.
    """
    width, height = cam.image_size
    n_classes = gset.class_probs.shape[1]
    empty = gset.geometry.empty_class
    far = cam.depth_range[1]

    sem = np.zeros((height, width, n_classes))
    depth_map = np.zeros((height, width))
    t = np.ones((height, width))

    proj = _project_splats(cam, gset, opts)
    for row in range(proj["ids"].shape[0]):
        u, v, r = proj["u"][row], proj["v"][row], proj["radius"][row]
        px0 = max(0, math.ceil(u - r - 0.5))
        px1 = min(width - 1, math.floor(u + r - 0.5))
        py0 = max(0, math.ceil(v - r - 0.5))
        py1 = min(height - 1, math.floor(v + r - 0.5))
        if px0 > px1 or py0 > py1:
            continue
        dx = np.arange(px0, px1 + 1) + 0.5 - u
        dy = np.arange(py0, py1 + 1) + 0.5 - v
        dxg, dyg = np.meshgrid(dx, dy)
        det = proj["det"][row]
        ia, ib, ic = proj["c"][row] / det, -proj["b"][row] / det, proj["a"][row] / det
        power = -0.5 * (ia * dxg * dxg + 2.0 * ib * dxg * dyg + ic * dyg * dyg)
        alpha = np.minimum(proj["opacity"][row] * np.exp(power), opts.alpha_clamp)
        t_sub = t[py0:py1 + 1, px0:px1 + 1]
        active = (
            (np.abs(dxg) <= r) & (np.abs(dyg) <= r)
            & (alpha >= opts.alpha_cutoff) & (t_sub >= opts.early_stop)
        )
        w = np.where(active, t_sub * alpha, 0.0)
        sem[py0:py1 + 1, px0:px1 + 1] += w[:, :, None] * proj_probs(gset, proj, row)
        depth_map[py0:py1 + 1, px0:px1 + 1] += w * proj["depth"][row]
        t[py0:py1 + 1, px0:px1 + 1] = np.where(active, t_sub * (1.0 - alpha), t_sub)

    sem[:, :, empty] += t
    depth_map += t * far
    return RenderedView(sem=sem, depth=depth_map, residual_transmittance=t, trace=None)


def proj_probs(gset: GaussianSet, proj: dict, row: int) -> np.ndarray:
    return gset.class_probs[proj["ids"][row]]


def raymarch_reference(cam: Camera, gset: GaussianSet, cfg: OracleConfig = OracleConfig()) -> RenderedView:
    """Volumetric renderer: march each pixel ray, accumulate Gaussian density.

    Per step the absorbed fraction is 1 - exp(-sigma * dt) with sigma the
    opacity-weighted sum of all Gaussian values at the sample, normalized so
    one head-on pass through an opaque Gaussian is effectively solid. The
    composited depth uses the sample's view z, matching the splat renderer's
    depth convention.
    """
    width, height = cam.image_size
    n_classes = gset.class_probs.shape[1]
    empty = gset.geometry.empty_class
    near, far = cam.depth_range

    origins, dirs_unit = pixel_rays(cam)
    origins = origins.reshape(-1, 3)
    dirs_unit = dirs_unit.reshape(-1, 3)

    # march in view-z slabs so every sample's view depth is explicit
    fwd = cam.forward
    cos = dirs_unit @ fwd  # view-z advance per meter along the ray
    n_px = origins.shape[0]
    sem = np.zeros((n_px, n_classes))
    depth_map = np.zeros(n_px)
    t = np.ones(n_px)

    live = gset.opacity > 0.0  # zero-opacity primitives add no density
    mu = gset.mu[live]
    opac = gset.opacity[live]
    probs = gset.class_probs[live]
    s2 = gset.scale ** 2
    kappa = DENSITY_GAIN / (gset.scale * math.sqrt(2.0 * math.pi))

    z0 = max(near, 1e-6) if cam.kind == PINHOLE else near
    n_steps = int(math.ceil((far - z0) / cfg.step_size))
    for k in range(n_steps):
        z_mid = z0 + (k + 0.5) * cfg.step_size
        if z_mid > far:
            break
        ray_t = z_mid / cos  # meters along the ray to reach this view depth
        pts = origins + dirs_unit * ray_t[:, None]
        # Gaussian field values at the samples, (n_px, N)
        d2 = ((pts[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
        gvals = opac[None, :] * np.exp(-0.5 * d2 / s2)
        sigma = kappa * gvals.sum(axis=1)
        seg = cfg.step_size / cos  # path length through the slab
        a = 1.0 - np.exp(-sigma * seg)
        active = sigma > 0
        if np.any(active):
            mix = gvals[active] @ probs / np.maximum(gvals[active].sum(axis=1), 1e-300)[:, None]
            w = t[active] * a[active]
            sem[active] += w[:, None] * mix
            depth_map[active] += w * z_mid
            t[active] *= 1.0 - a[active]

    sem[:, empty] += t
    depth_map += t * far
    return RenderedView(
        sem=sem.reshape(height, width, n_classes),
        depth=depth_map.reshape(height, width),
        residual_transmittance=t.reshape(height, width),
        trace=None,
    )


@dataclass
class GradCheckReport:
    max_rel_err: float
    mean_rel_err: float
    worst_index: tuple[int, int, int, int] | None  # voxel (x, y, z) and class
    n_checked: int
    n_kink_excluded: int = 0  # entries where the L1 loss is non-smooth within +-epsilon

    def to_json(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "worst_index": list(self.worst_index) if self.worst_index else None,
            "n_checked": self.n_checked,
            "n_kink_excluded": self.n_kink_excluded,
        }


def fd_gradcheck(
    pred_grid: OccupancyGrid,
    gt_grid: OccupancyGrid,
    cams,
    cfg: OracleConfig = OracleConfig(),
    scale: float | None = None,
) -> GradCheckReport:
    """Compare analytic d(l2d)/d(logits) against central finite differences.

    Every logit is perturbed by +-fd_epsilon in float64. Entries whose
    analytic gradient is below ``abs_tol`` are excluded (both sides vanish
    in flat regions).

    The L1 losses are piecewise linear, so an interval that straddles a
    kink (a pixel residual changing sign) yields a difference quotient that
    averages two slopes instead of measuring one. Entries failing at the
    base epsilon are therefore re-probed at epsilon/2 and epsilon/4. A kink
    between the smaller probes and the original one makes the refined
    quotient agree with the analytic value (pass); a kink inside the
    smallest interval makes the quotient error grow as epsilon shrinks
    (excluded and counted); a quotient that stabilizes away from the
    analytic value is a genuine failure.
    """
    logits = np.asarray(pred_grid.logits, dtype=np.float64)
    base = OccupancyGrid(pred_grid.geometry, logits=logits)
    analytic = l2d(base, gt_grid, cams, scale, GRADCHECK_RENDER_OPTIONS).logit_grads

    def value(arr):
        g = OccupancyGrid(pred_grid.geometry, logits=arr)
        return l2d(g, gt_grid, cams, scale, GRADCHECK_RENDER_OPTIONS, want_grads=False).l2d

    def quotient(idx, eps):
        bumped = logits.copy()
        bumped[idx] = logits[idx] + eps
        hi = value(bumped)
        bumped[idx] = logits[idx] - eps
        lo = value(bumped)
        return (hi - lo) / (2.0 * eps)

    def rel_err(fd, ref):
        return abs(fd - ref) / max(abs(ref), cfg.abs_tol)

    rel = np.zeros(logits.shape)
    mask = np.abs(analytic) > cfg.abs_tol
    kinks = 0
    for idx in np.ndindex(logits.shape):
        if not mask[idx]:
            continue
        err = rel_err(quotient(idx, cfg.fd_epsilon), analytic[idx])
        if err >= cfg.rel_tol:
            q2 = quotient(idx, cfg.fd_epsilon / 2.0)
            q4 = quotient(idx, cfg.fd_epsilon / 4.0)
            err = rel_err(q4, analytic[idx])
            # inside a kink the quotient bias scales like 1/eps, so the
            # spread between the two refinements stays comparable to the
            # remaining error; a real gradient bug leaves a stable quotient
            if err >= cfg.rel_tol and abs(q4 - q2) > 0.25 * abs(q4 - analytic[idx]):
                mask[idx] = False
                kinks += 1
                continue
        rel[idx] = err

    n_checked = int(mask.sum())
    if n_checked == 0:
        return GradCheckReport(0.0, 0.0, None, 0, kinks)
    rel[~mask] = 0.0
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return GradCheckReport(
        max_rel_err=float(rel.max()),
        mean_rel_err=float(rel[mask].mean()),
        worst_index=tuple(int(i) for i in worst),
        n_checked=n_checked,
        n_kink_excluded=kinks,
    )
