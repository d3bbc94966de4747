"""Evaluation metrics: voxel IoU/mIoU, depth-tolerant ray IoU, BeV image IoU.

Ray scoring casts each query ray through both grids via 3D-DDA traversal
and compares the first occupied voxel: a ray counts as correct only when
the hit classes match and the hit distances (measured to the entry face of
the hit voxel, consistently for both grids) differ by at most the depth
tolerance. The bird's-eye-view metrics compare top-down argmax renderings
of the two grids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera, make_bev_camera, pixel_rays
from .gaussianize import gaussianize_ground_truth
from .grid import GridGeometry, OccupancyGrid
from .renderer import render

DEFAULT_RAY_TOLERANCES = (1.0, 2.0, 4.0)


@dataclass
class RaySet:
    """Query rays in world space; directions must be unit vectors."""

    origins: np.ndarray     # (R, 3)
    directions: np.ndarray  # (R, 3)
    provenance: str = "custom"

    def __post_init__(self):
        self.origins = np.asarray(self.origins, dtype=np.float64).reshape(-1, 3)
        self.directions = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        if self.origins.shape != self.directions.shape:
            raise ValueError("origins and directions must have matching shapes")
        norms = np.linalg.norm(self.directions, axis=1)
        if self.origins.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("ray directions must be unit vectors")

    def __len__(self) -> int:
        return self.origins.shape[0]


def rays_from_cameras(cams: list[Camera], stride: int = 1) -> RaySet:
    """One ray per (strided) pixel of each camera."""
    origins, dirs = [], []
    for cam in cams:
        o, d = pixel_rays(cam, stride)
        origins.append(o.reshape(-1, 3))
        dirs.append(d.reshape(-1, 3))
    return RaySet(np.concatenate(origins), np.concatenate(dirs), provenance="from-camera")


@dataclass
class MetricsReport:
    iou: float
    miou: float
    per_class_iou: np.ndarray
    rayiou: float
    rayiou_at: dict[float, float]
    bev_iou: float
    bev_miou: float
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "iou": self.iou,
            "miou": self.miou,
            "per_class_iou": [None if math.isnan(v) else v for v in self.per_class_iou],
            "rayiou": self.rayiou,
            "rayiou_at": {str(k): v for k, v in self.rayiou_at.items()},
            "bev_iou": self.bev_iou,
            "bev_miou": self.bev_miou,
            "counts": self.counts,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def csv_header(self) -> str:
        tols = ",".join(f"rayiou@{t:g}" for t in self.rayiou_at)
        return f"iou,miou,rayiou,{tols},bev_iou,bev_miou"

    def csv_row(self) -> str:
        tols = ",".join(f"{v:.6f}" for v in self.rayiou_at.values())
        return (
            f"{self.iou:.6f},{self.miou:.6f},{self.rayiou:.6f},{tols},"
            f"{self.bev_iou:.6f},{self.bev_miou:.6f}"
        )


def _check_geometry(pred: OccupancyGrid, gt: OccupancyGrid) -> None:
    if pred.geometry != gt.geometry:
        raise ValueError(f"geometry mismatch: {pred.geometry} vs {gt.geometry}")
    if pred.labels is None or gt.labels is None:
        raise ValueError("metrics require labels grids")


def _label_confusion(pred: np.ndarray, gt: np.ndarray, num_classes: int, empty_class: int):
    """Per-class and binary-occupancy TP/FP/FN tallies."""
    pred = pred.reshape(-1).astype(np.int64)
    gt = gt.reshape(-1).astype(np.int64)
    tp = np.bincount(gt[pred == gt], minlength=num_classes).astype(np.int64)
    pred_count = np.bincount(pred, minlength=num_classes).astype(np.int64)
    gt_count = np.bincount(gt, minlength=num_classes).astype(np.int64)
    fp = pred_count - tp
    fn = gt_count - tp
    p_occ = pred != empty_class
    g_occ = gt != empty_class
    binary = {
        "tp": int(np.sum(p_occ & g_occ)),
        "fp": int(np.sum(p_occ & ~g_occ)),
        "fn": int(np.sum(~p_occ & g_occ)),
    }
    return tp, fp, fn, binary


def _scores_from_confusion(tp, fp, fn, binary, num_classes: int, empty_class: int):
    denom = binary["tp"] + binary["fp"] + binary["fn"]
    iou = binary["tp"] / denom if denom else 1.0
    per_class = np.full(num_classes, np.nan)
    present = (tp + fp + fn) > 0
    present[empty_class] = False
    per_class[present] = tp[present] / (tp + fp + fn)[present]
    miou = float(np.mean(per_class[present])) if present.any() else 1.0
    return float(iou), miou, per_class


def voxel_metrics(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    eval_mask: np.ndarray | None = None,
) -> tuple[float, float, np.ndarray]:
    """Binary occupancy IoU, mIoU over non-empty classes present in either
    grid, and the per-class IoU vector (NaN for absent classes and empty)."""
    _check_geometry(pred, gt)
    g = pred.geometry
    p, t = pred.labels, gt.labels
    if eval_mask is not None:
        if eval_mask.shape != g.dims:
            raise ValueError(f"mask shape {eval_mask.shape} != dims {g.dims}")
        p, t = p[eval_mask], t[eval_mask]
    tp, fp, fn, binary = _label_confusion(p, t, g.num_classes, g.empty_class)
    return _scores_from_confusion(tp, fp, fn, binary, g.num_classes, g.empty_class)


def first_hit(grid: OccupancyGrid, origin, direction) -> tuple[int, float] | None:
    """First occupied voxel along a ray, via 3D-DDA traversal.

    Returns (class, distance) with the distance measured from the ray
    origin to the intersection with the hit voxel's entry face (clamped at
    zero when the origin already lies inside it), or None on a miss.
    """
    if grid.labels is None:
        raise ValueError("first_hit requires a labels grid")
    g = grid.geometry
    o = (np.asarray(origin, dtype=np.float64) - np.asarray(g.origin)) / g.voxel_size
    d = np.asarray(direction, dtype=np.float64) / g.voxel_size
    dims = np.asarray(g.dims)

    # slab test for the parametric window [t0, t1] inside the grid (meters)
    t0, t1 = 0.0, np.inf
    for ax in range(3):
        if d[ax] == 0.0:
            if o[ax] < 0.0 or o[ax] > dims[ax]:
                return None
            continue
        ta = (0.0 - o[ax]) / d[ax]
        tb = (dims[ax] - o[ax]) / d[ax]
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    if t0 > t1:
        return None

    p = o + d * t0
    voxel = np.clip(np.floor(p).astype(np.int64), 0, dims - 1)
    step = np.sign(d).astype(np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for ax in range(3):
        if d[ax] > 0.0:
            t_max[ax] = t0 + (voxel[ax] + 1 - p[ax]) / d[ax]
            t_delta[ax] = 1.0 / d[ax]
        elif d[ax] < 0.0:
            t_max[ax] = t0 + (voxel[ax] - p[ax]) / d[ax]
            t_delta[ax] = -1.0 / d[ax]

    labels = grid.labels
    empty = g.empty_class
    t_enter = t0
    while True:
        cls = int(labels[voxel[0], voxel[1], voxel[2]])
        if cls != empty:
            return cls, float(t_enter)
        ax = int(np.argmin(t_max))
        t_enter = float(t_max[ax])
        voxel[ax] += step[ax]
        if voxel[ax] < 0 or voxel[ax] >= dims[ax]:
            return None
        t_max[ax] += t_delta[ax]


def rayiou(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    rays: RaySet,
    tolerances=DEFAULT_RAY_TOLERANCES,
) -> tuple[float, dict[float, float], dict]:
    """Depth-tolerant ray-level IoU.

    Per tolerance tau: a ray is a TP when both grids hit, the classes match
    and the hit distances differ by at most tau; an FN when the ground truth
    hits but the prediction misses it (by class, depth or entirely); an FP
    when the prediction hits where the ground truth has nothing. Returns the
    mean over tolerances, the per-tolerance scores and the raw counts.
    """
    _check_geometry(pred, gt)
    if len(rays) == 0:
        raise ValueError("empty ray set")
    tolerances = tuple(float(t) for t in tolerances)
    if any(t <= 0 for t in tolerances):
        raise ValueError("tolerances must be positive")

    hits = []
    for i in range(len(rays)):
        hp = first_hit(pred, rays.origins[i], rays.directions[i])
        hg = first_hit(gt, rays.origins[i], rays.directions[i])
        hits.append((hp, hg))

    scores: dict[float, float] = {}
    counts: dict = {}
    for tau in tolerances:
        tp = fp = fn = 0
        for hp, hg in hits:
            if hg is not None:
                if hp is not None and hp[0] == hg[0] and abs(hp[1] - hg[1]) <= tau:
                    tp += 1
                else:
                    fn += 1
            elif hp is not None:
                fp += 1
        denom = tp + fp + fn
        scores[tau] = tp / denom if denom else 1.0
        counts[str(tau)] = {"tp": tp, "fp": fp, "fn": fn}
    return float(np.mean(list(scores.values()))), scores, counts


def _bev_class_image(grid: OccupancyGrid, cam: Camera) -> np.ndarray:
    view = render(cam, gaussianize_ground_truth(grid))
    classes = np.argmax(view.sem, axis=2)
    classes[view.residual_transmittance > 0.5] = grid.geometry.empty_class
    return classes


def bev_metrics(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    pixels_per_meter: float | None = None,
) -> tuple[float, float, dict]:
    """Top-down image IoU and mIoU between argmax renderings of both grids.

    Both grids are rendered with ground-truth-style opacities; a pixel's
    class is the argmax of the semantic planes, with mostly-transparent
    pixels (residual transmittance > 0.5) labelled empty.
    """
    _check_geometry(pred, gt)
    g = pred.geometry
    ppm = pixels_per_meter or (1.0 / g.voxel_size)
    cam = make_bev_camera(g, ppm)
    img_p = _bev_class_image(pred, cam)
    img_g = _bev_class_image(gt, cam)
    tp, fp, fn, binary = _label_confusion(img_p, img_g, g.num_classes, g.empty_class)
    iou, miou, _ = _scores_from_confusion(tp, fp, fn, binary, g.num_classes, g.empty_class)
    counts = {
        "binary": binary,
        "tp": tp.tolist(), "fp": fp.tolist(), "fn": fn.tolist(),
    }
    return iou, miou, counts


def evaluate(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    rays: RaySet,
    tolerances=DEFAULT_RAY_TOLERANCES,
    pixels_per_meter: float | None = None,
    eval_mask: np.ndarray | None = None,
) -> MetricsReport:
    """Run the full metric suite and assemble one report."""
    g = pred.geometry
    iou, miou, per_class = voxel_metrics(pred, gt, eval_mask)
    tp, fp, fn, binary = _label_confusion(
        pred.labels if eval_mask is None else pred.labels[eval_mask],
        gt.labels if eval_mask is None else gt.labels[eval_mask],
        g.num_classes, g.empty_class,
    )
    ray_mean, ray_at, ray_counts = rayiou(pred, gt, rays, tolerances)
    b_iou, b_miou, bev_counts = bev_metrics(pred, gt, pixels_per_meter)
    return MetricsReport(
        iou=iou, miou=miou, per_class_iou=per_class,
        rayiou=ray_mean, rayiou_at=ray_at,
        bev_iou=b_iou, bev_miou=b_miou,
        counts={
            "voxel": {"binary": binary, "tp": tp.tolist(), "fp": fp.tolist(), "fn": fn.tolist()},
            "ray": ray_counts,
            "bev": bev_counts,
        },
    )


def default_eval_cameras(geometry: GridGeometry, image_size=(96, 64)) -> list[Camera]:
    """Six surround pinhole cameras at the scene center for ray generation.

    A documented stand-in for dataset sensor rigs: cameras sit 1.8 m above
    the grid floor at the horizontal center, yawed 60 degrees apart.
    """
    from .cameras import PINHOLE, extrinsics_from, look_rotation

    g = geometry
    center = np.asarray(g.origin) + g.extent / 2.0
    z = min(g.origin[2] + 1.8, g.origin[2] + g.extent[2])
    eye = np.array([center[0], center[1], z])
    width, height = image_size
    fx = width / (2.0 * math.tan(math.radians(30.0)))
    K = np.array([[fx, 0, width / 2], [0, fx, height / 2], [0, 0, 1.0]])
    far = float(np.linalg.norm(g.extent))
    cams = []
    for k in range(6):
        yaw = k * math.pi / 3.0
        R = look_rotation([math.cos(yaw), math.sin(yaw), 0.0])
        cams.append(Camera(
            kind=PINHOLE, intrinsics=K,
            extrinsics=extrinsics_from(R, eye),
            image_size=image_size, depth_range=(0.1, far),
        ))
    return cams
