"""Conversion of occupancy grids into spherical Gaussian primitive sets.

Each voxel becomes one isotropic Gaussian: center at the voxel center,
identity rotation, a single scalar standard deviation shared by the whole
set (default: half the voxel side). Predictions carry softmax class
probabilities and opacity ``1 - p(empty)``; ground truth carries one-hot
probabilities and binary opacity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridGeometry, OccupancyGrid


@dataclass(frozen=True)
class GaussianPrimitive:
    """A single spherical Gaussian (scalar view of one GaussianSet row)."""

    mu: np.ndarray          # world position, meters
    scale: float            # standard deviation, meters; covariance = scale^2 * I
    class_probs: np.ndarray  # (C,), nonnegative, sums to 1
    opacity: float
    source_index: int       # flat voxel index in the originating grid


@dataclass
class GaussianSet:
    """All primitives of one grid, stored as arrays in flat voxel order.

    ``mode`` is "prediction" or "ground_truth"; in ground-truth mode every
    opacity is exactly 0 or 1.
    """

    geometry: GridGeometry
    mu: np.ndarray           # (N, 3) float64
    scale: float             # shared isotropic stddev, meters
    class_probs: np.ndarray  # (N, C) float64
    opacity: np.ndarray      # (N,) float64
    mode: str
    source_index: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.mode not in ("prediction", "ground_truth"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        n = self.mu.shape[0]
        if self.class_probs.shape[0] != n or self.opacity.shape[0] != n:
            raise ValueError("inconsistent primitive counts")

    def __len__(self) -> int:
        return self.mu.shape[0]

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            mu=self.mu[i],
            scale=self.scale,
            class_probs=self.class_probs[i],
            opacity=float(self.opacity[i]),
            source_index=int(self.source_index[i]),
        )


def default_scale(geometry: GridGeometry) -> float:
    """Default Gaussian stddev: half the voxel side (2s equals the voxel)."""
    return geometry.voxel_size / 2.0


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax in float64 with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gaussianize_prediction(grid: OccupancyGrid, scale: float | None = None) -> GaussianSet:
    """One primitive per voxel from a logits grid.

    class_probs = softmax(logits); opacity = 1 - p(empty).
    """
    if grid.logits is None:
        raise ValueError("prediction gaussianization requires a logits grid")
    g = grid.geometry
    s = default_scale(g) if scale is None else float(scale)
    probs = softmax(grid.logits_flat())
    return GaussianSet(
        geometry=g,
        mu=g.voxel_centers(),
        scale=s,
        class_probs=probs,
        opacity=1.0 - probs[:, g.empty_class],
        mode="prediction",
        source_index=np.arange(g.num_voxels, dtype=np.int64),
    )


def gaussianize_ground_truth(grid: OccupancyGrid, scale: float | None = None) -> GaussianSet:
    """One primitive per voxel from a labels grid.

    Occupied voxels get opacity 1 and one-hot class_probs; empty voxels
    opacity 0 (they never render but keep the set aligned with the grid).
    """
    if grid.labels is None:
        raise ValueError("ground-truth gaussianization requires a labels grid")
    g = grid.geometry
    s = default_scale(g) if scale is None else float(scale)
    labels = grid.labels_flat().astype(np.int64)
    probs = np.zeros((g.num_voxels, g.num_classes), dtype=np.float64)
    probs[np.arange(g.num_voxels), labels] = 1.0
    return GaussianSet(
        geometry=g,
        mu=g.voxel_centers(),
        scale=s,
        class_probs=probs,
        opacity=(labels != g.empty_class).astype(np.float64),
        mode="ground_truth",
        source_index=np.arange(g.num_voxels, dtype=np.int64),
    )


def prediction_backward(
    logits_flat: np.ndarray,
    d_class_probs: np.ndarray,
    d_opacity: np.ndarray,
    empty_class: int,
) -> np.ndarray:
    """Chain gradients on (class_probs, opacity) back to the logits.

    With p = softmax(logits) and opacity o = 1 - p[empty], the combined
    upstream on p is g = d_class_probs - d_opacity * e_empty, and the
    softmax VJP is p * (g - <p, g>).
    """
    p = softmax(logits_flat)
    g = np.array(d_class_probs, dtype=np.float64)
    g[:, empty_class] -= d_opacity
    return p * (g - np.sum(p * g, axis=1, keepdims=True))
