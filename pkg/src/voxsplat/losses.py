"""Rendering losses with analytic gradients back to the grid logits.

Per camera, predicted and ground-truth views are compared with L1 penalties
on the semantic planes and on the depth map (the latter normalized by the
camera's far depth). The two-camera aggregate sums a bird's-eye-view term
and a perspective-camera term; the total training loss adds a voxel
cross-entropy weighted against the rendering term by ``lambda``.

All L1 reductions are means (over pixels, and channels for semantics) so
the default weight stays meaningful across image resolutions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gaussianize import (
    gaussianize_ground_truth,
    gaussianize_prediction,
    prediction_backward,
    softmax,
)
from .grid import OccupancyGrid, unflatten_field
from .renderer import RenderedView, RenderOptions, render, render_backward

DEFAULT_LAMBDA = 15.0


@dataclass
class RenderLoss2D:
    """The two-camera rendering-loss fragment produced by :func:`l2d`."""

    sem_loss: dict[str, float]
    depth_loss: dict[str, float]
    l2d: float
    logit_grads: np.ndarray | None  # (X, Y, Z, C) d(l2d)/d(logits)


@dataclass
class LossReport:
    """Full loss breakdown: per-camera terms, aggregates and gradients."""

    sem_loss: dict[str, float]
    depth_loss: dict[str, float]
    l2d: float
    l3d: float
    lam: float
    total: float
    logit_grads: np.ndarray | None = None
    cameras: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "sem_loss": self.sem_loss,
            "depth_loss": self.depth_loss,
            "l2d": self.l2d,
            "l3d": self.l3d,
            "lambda": self.lam,
            "total": self.total,
            "cameras": self.cameras,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def semantic_loss(pred: RenderedView, gt: RenderedView) -> tuple[float, np.ndarray]:
    """Mean L1 distance between semantic planes, plus d(loss)/d(pred.sem)."""
    if pred.sem.shape != gt.sem.shape:
        raise ValueError(f"semantic shape mismatch {pred.sem.shape} vs {gt.sem.shape}")
    diff = pred.sem - gt.sem
    loss = float(np.mean(np.abs(diff)))
    return loss, np.sign(diff) / diff.size


def depth_loss(pred: RenderedView, gt: RenderedView, d_range: float) -> tuple[float, np.ndarray]:
    """Mean L1 depth distance normalized by the camera range, plus gradient."""
    if d_range <= 0:
        raise ValueError("d_range must be positive")
    if pred.depth.shape != gt.depth.shape:
        raise ValueError(f"depth shape mismatch {pred.depth.shape} vs {gt.depth.shape}")
    diff = pred.depth - gt.depth
    loss = float(np.mean(np.abs(diff))) / d_range
    return loss, np.sign(diff) / (diff.size * d_range)


def total_loss(l3d: float, l2d: float, lam: float = DEFAULT_LAMBDA) -> float:
    """Combined objective: voxel loss plus lambda-weighted rendering loss."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return l3d + lam * l2d


def _check_geometry(pred_grid: OccupancyGrid, gt_grid: OccupancyGrid) -> None:
    if pred_grid.geometry != gt_grid.geometry:
        raise ValueError(
            f"geometry mismatch: {pred_grid.geometry} vs {gt_grid.geometry}"
        )


def l2d(
    pred_grid: OccupancyGrid,
    gt_grid: OccupancyGrid,
    cams,
    scale: float | None = None,
    opts: RenderOptions | None = None,
    want_grads: bool = True,
    gt_views: dict[str, RenderedView] | None = None,
) -> RenderLoss2D:
    """Two-camera rendering loss between a logits grid and a labels grid.

    ``cams`` is the (bev, cam) camera pair. Ground-truth views may be
    supplied through ``gt_views`` (keyed by camera label) to reuse cached
    renders of fixed cameras.
    """
    _check_geometry(pred_grid, gt_grid)
    if pred_grid.logits is None:
        raise ValueError("prediction grid must carry logits")
    if gt_grid.labels is None:
        raise ValueError("ground-truth grid must carry labels")
    base = opts or RenderOptions()
    pred_opts = RenderOptions(
        alpha_cutoff=base.alpha_cutoff, alpha_clamp=base.alpha_clamp,
        early_stop=base.early_stop, tile_size=base.tile_size,
        record_trace=want_grads,
    )
    gt_opts = RenderOptions(
        alpha_cutoff=base.alpha_cutoff, alpha_clamp=base.alpha_clamp,
        early_stop=base.early_stop, tile_size=base.tile_size,
        record_trace=False,
    )

    pred_set = gaussianize_prediction(pred_grid, scale)
    gt_set = gaussianize_ground_truth(gt_grid, scale)
    g = pred_grid.geometry

    sem_terms: dict[str, float] = {}
    depth_terms: dict[str, float] = {}
    d_cp_total = np.zeros_like(pred_set.class_probs)
    d_op_total = np.zeros_like(pred_set.opacity)

    labels = ("bev", "cam")
    bev_cam, other_cam = cams
    for label, cam in zip(labels, (bev_cam, other_cam)):
        pred_view = render(cam, pred_set, pred_opts)
        if gt_views is not None and label in gt_views:
            gt_view = gt_views[label]
        else:
            gt_view = render(cam, gt_set, gt_opts)
        s_loss, d_sem = semantic_loss(pred_view, gt_view)
        d_loss, d_depth = depth_loss(pred_view, gt_view, cam.depth_range[1])
        sem_terms[label] = s_loss
        depth_terms[label] = d_loss
        if want_grads:
            buffers = render_backward(pred_view, d_sem, d_depth)
            d_cp_total += buffers.d_class_probs
            d_op_total += buffers.d_opacity

    value = sum(sem_terms.values()) + sum(depth_terms.values())
    grads = None
    if want_grads:
        flat = prediction_backward(
            pred_grid.logits_flat(), d_cp_total, d_op_total, g.empty_class
        )
        grads = unflatten_field(g, flat)
    return RenderLoss2D(sem_loss=sem_terms, depth_loss=depth_terms, l2d=float(value), logit_grads=grads)


def cross_entropy_3d(pred_grid: OccupancyGrid, gt_grid: OccupancyGrid) -> tuple[float, np.ndarray]:
    """Mean voxel cross-entropy and its logit gradient (softmax - onehot)/N."""
    _check_geometry(pred_grid, gt_grid)
    if pred_grid.logits is None or gt_grid.labels is None:
        raise ValueError("cross_entropy_3d needs pred logits and gt labels")
    logits = pred_grid.logits_flat()
    labels = gt_grid.labels_flat().astype(np.int64)
    n = labels.shape[0]
    p = softmax(logits)
    rows = np.arange(n)
    # log-softmax evaluated stably from the shifted logits
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    loss = float(-log_p[rows, labels].mean())
    grad = p
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, unflatten_field(pred_grid.geometry, grad)


def loss_report(
    pred_grid: OccupancyGrid,
    gt_grid: OccupancyGrid,
    cams,
    scale: float | None = None,
    lam: float = DEFAULT_LAMBDA,
    opts: RenderOptions | None = None,
    want_grads: bool = True,
    gt_views: dict[str, RenderedView] | None = None,
) -> LossReport:
    """Full training objective: cross-entropy plus weighted rendering loss."""
    frag = l2d(pred_grid, gt_grid, cams, scale, opts, want_grads, gt_views)
    l3d, d3d = cross_entropy_3d(pred_grid, gt_grid)
    grads = None
    if want_grads:
        grads = d3d + lam * frag.logit_grads
    return LossReport(
        sem_loss=frag.sem_loss,
        depth_loss=frag.depth_loss,
        l2d=frag.l2d,
        l3d=l3d,
        lam=lam,
        total=total_loss(l3d, frag.l2d, lam),
        logit_grads=grads,
        cameras=["bev", "cam"],
    )
