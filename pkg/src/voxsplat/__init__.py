"""voxsplat: differentiable Gaussian-splatting rendering, losses and metrics
for 3D semantic occupancy grids."""

from .cameras import (
    Camera,
    PlacementSpec,
    load_cameras,
    make_bev_camera,
    pixel_rays,
    place_cameras,
    project_point,
    save_cameras,
)
from .gaussianize import (
    GaussianPrimitive,
    GaussianSet,
    default_scale,
    gaussianize_ground_truth,
    gaussianize_prediction,
)
from .grid import (
    GridFormatError,
    GridGeometry,
    OccupancyGrid,
    load_grid,
    save_grid,
    synth_scene,
    voxel_center,
)
from .losses import (
    DEFAULT_LAMBDA,
    LossReport,
    cross_entropy_3d,
    depth_loss,
    l2d,
    loss_report,
    semantic_loss,
    total_loss,
)
from .metrics import (
    DEFAULT_RAY_TOLERANCES,
    MetricsReport,
    RaySet,
    bev_metrics,
    evaluate,
    first_hit,
    rayiou,
    rays_from_cameras,
    voxel_metrics,
)
from .renderer import (
    GradientBuffers,
    RenderedView,
    RenderOptions,
    Splat2D,
    project_gaussian,
    render,
    render_backward,
)

__version__ = "0.1.0"

__all__ = [
    "Camera", "PlacementSpec", "load_cameras", "make_bev_camera", "pixel_rays",
    "place_cameras", "project_point", "save_cameras",
    "GaussianPrimitive", "GaussianSet", "default_scale",
    "gaussianize_ground_truth", "gaussianize_prediction",
    "GridFormatError", "GridGeometry", "OccupancyGrid", "load_grid",
    "save_grid", "synth_scene", "voxel_center",
    "DEFAULT_LAMBDA", "LossReport", "cross_entropy_3d", "depth_loss", "l2d",
    "loss_report", "semantic_loss", "total_loss",
    "DEFAULT_RAY_TOLERANCES", "MetricsReport", "RaySet", "bev_metrics",
    "evaluate", "first_hit", "rayiou", "rays_from_cameras", "voxel_metrics",
    "GradientBuffers", "RenderedView", "RenderOptions", "Splat2D",
    "project_gaussian", "render", "render_backward",
]
