"""Camera model and virtual-camera placement strategies.

Camera space is x right, y down, z forward; ``extrinsics`` maps world to
camera coordinates (p_cam = R @ p_world + t, with [R|t] the top 3x4 block
of the 4x4 matrix). Pixel coordinates are continuous with the image's
top-left corner at (0, 0), so pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1)
and samples at its center (ix + 0.5, iy + 0.5).

Sampled strategies draw every number from the spec's seed via a dedicated
``numpy`` Generator, so camera lists are fully reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .grid import GridGeometry

PINHOLE = "pinhole"
ORTHOGRAPHIC = "orthographic"

DEFAULT_ELEVATION_RANGE = (2.0, 8.0)
DEFAULT_TILT_RANGE = (math.radians(10.0), math.radians(35.0))
# Ring radius for the error-seeking strategy, as a fraction of the largest
# horizontal scene extent.
DYNAMIC_RING_FRACTION = (0.25, 0.5)


@dataclass(frozen=True)
class Camera:
    """A pinhole or orthographic camera with validated rigid extrinsics."""

    kind: str
    intrinsics: np.ndarray   # 3x3; pinhole: fx, fy, cx, cy; ortho: px/m scales + principal point
    extrinsics: np.ndarray   # 4x4 world-to-camera rigid transform
    image_size: tuple[int, int]   # (width, height), pixels
    depth_range: tuple[float, float]  # (near, far), meters

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64))
        object.__setattr__(self, "extrinsics", np.asarray(self.extrinsics, dtype=np.float64))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        object.__setattr__(self, "depth_range", (float(self.depth_range[0]), float(self.depth_range[1])))
        if self.kind not in (PINHOLE, ORTHOGRAPHIC):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.intrinsics.shape != (3, 3) or self.extrinsics.shape != (4, 4):
            raise ValueError("intrinsics must be 3x3 and extrinsics 4x4")
        R = self.extrinsics[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("extrinsic rotation block is not a proper rotation")
        near, far = self.depth_range
        if near < 0 or far <= near:
            raise ValueError(f"need 0 <= near < far, got {self.depth_range}")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ValueError(f"image_size must be >= 1, got {self.image_size}")

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsics[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        """Optical axis (world coordinates)."""
        return self.rotation[2]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "intrinsics": self.intrinsics.tolist(),
            "extrinsics": self.extrinsics.tolist(),
            "image_size": list(self.image_size),
            "depth_range": list(self.depth_range),
        }

    @staticmethod
    def from_json(obj: dict) -> "Camera":
        return Camera(
            kind=obj["kind"],
            intrinsics=np.asarray(obj["intrinsics"], dtype=np.float64),
            extrinsics=np.asarray(obj["extrinsics"], dtype=np.float64),
            image_size=tuple(obj["image_size"]),
            depth_range=tuple(obj["depth_range"]),
        )

    def json_hash_key(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


class ProjectedPoint(NamedTuple):
    pixel: np.ndarray  # (2,) continuous pixel coordinates
    depth: float       # view-space z
    ok: bool           # False when a pinhole point lies at or behind the near plane


def project_point(cam: Camera, x) -> ProjectedPoint:
    """Project a world point; ``ok`` is False if it cannot be projected."""
    p = cam.rotation @ np.asarray(x, dtype=np.float64) + cam.translation
    K = cam.intrinsics
    if cam.kind == PINHOLE:
        if p[2] <= cam.depth_range[0]:
            return ProjectedPoint(np.array([np.nan, np.nan]), float(p[2]), False)
        u = K[0, 0] * p[0] / p[2] + K[0, 2]
        v = K[1, 1] * p[1] / p[2] + K[1, 2]
    else:
        u = K[0, 0] * p[0] + K[0, 2]
        v = K[1, 1] * p[1] + K[1, 2]
    return ProjectedPoint(np.array([u, v]), float(p[2]), True)


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation whose optical axis is ``forward``.

    Rows are the camera's right/down/forward axes in world coordinates.
    Falls back to the world x axis as up-hint when forward is vertical.
    """
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    u = np.asarray(up, dtype=np.float64)
    right = np.cross(f, u)
    if np.linalg.norm(right) < 1e-8:
        right = np.cross(f, np.array([1.0, 0.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.stack([right, down, f])


def extrinsics_from(rotation: np.ndarray, center) -> np.ndarray:
    """Build a 4x4 world-to-camera matrix from rotation and camera center."""
    W = np.eye(4)
    W[:3, :3] = rotation
    W[:3, 3] = -rotation @ np.asarray(center, dtype=np.float64)
    return W


def default_pinhole_intrinsics(width: int = 160, height: int = 120) -> tuple[np.ndarray, tuple[int, int]]:
    """Fallback intrinsics for strategies invoked without base cameras (60 deg hfov)."""
    fx = width / (2.0 * math.tan(math.radians(30.0)))
    K = np.array([[fx, 0.0, width / 2.0], [0.0, fx, height / 2.0], [0.0, 0.0, 1.0]])
    return K, (width, height)


def _pinhole_far(geometry: GridGeometry) -> float:
    # Grid diagonal bounds every visible depth for cameras near the scene.
    return float(np.linalg.norm(geometry.extent))


def make_bev_camera(geometry: GridGeometry, pixels_per_meter: float) -> Camera:
    """Orthographic top-down camera covering the grid's full xy extent.

    The optical axis points along world -z from one voxel above the grid
    top; increasing image row corresponds to decreasing world y.
    """
    if pixels_per_meter <= 0:
        raise ValueError("pixels_per_meter must be positive")
    g = geometry
    ext = g.extent
    width = int(math.ceil(ext[0] * pixels_per_meter - 1e-9))
    height = int(math.ceil(ext[1] * pixels_per_meter - 1e-9))
    margin = g.voxel_size
    center = np.asarray(g.origin) + ext / 2.0
    eye = np.array([center[0], center[1], g.origin[2] + ext[2] + margin])
    R = np.array([
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
    ])
    K = np.array([
        [pixels_per_meter, 0.0, width / 2.0],
        [0.0, pixels_per_meter, height / 2.0],
        [0.0, 0.0, 1.0],
    ])
    far = float(ext[2] + 2.0 * margin)
    return Camera(
        kind=ORTHOGRAPHIC,
        intrinsics=K,
        extrinsics=extrinsics_from(R, eye),
        image_size=(width, height),
        depth_range=(0.0, far),
    )


def pitch_down(camera: Camera, angle: float) -> Camera:
    """Rotate the camera about its own right axis so the view tips downward."""
    c, s = math.cos(angle), math.sin(angle)
    P = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    R_new = P @ camera.rotation
    return Camera(
        kind=camera.kind,
        intrinsics=camera.intrinsics,
        extrinsics=extrinsics_from(R_new, camera.center),
        image_size=camera.image_size,
        depth_range=camera.depth_range,
    )


def translate(camera: Camera, delta) -> Camera:
    """Move the camera center by a world-space offset, orientation unchanged."""
    return Camera(
        kind=camera.kind,
        intrinsics=camera.intrinsics,
        extrinsics=extrinsics_from(camera.rotation, camera.center + np.asarray(delta, dtype=np.float64)),
        image_size=camera.image_size,
        depth_range=camera.depth_range,
    )


@dataclass
class PlacementSpec:
    """Parameters of one virtual-camera placement strategy.

    ``seed`` is mandatory so sampled placements are reproducible. The xy
    translation range is clamped to half the largest horizontal scene
    extent at sampling time.
    """

    strategy: str
    seed: int
    elevation_range: tuple[float, float] = DEFAULT_ELEVATION_RANGE
    xy_range: float | None = None        # None: no explicit cap beyond the half-extent clamp
    tilt_range: tuple[float, float] = DEFAULT_TILT_RANGE
    count: int = 1                        # cameras produced by fully_random / dynamic
    pixels_per_meter: float | None = None  # bev only; None picks one pixel per voxel
    base_cameras: list[Camera] = field(default_factory=list)

    STRATEGIES = ("sensor", "elevated", "elevated_around", "fully_random", "dynamic", "bev")

    def __post_init__(self):
        if self.strategy not in self.STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.seed is None:
            raise ValueError("placement seed is mandatory")
        if self.elevation_range[0] < 0 or self.elevation_range[1] < self.elevation_range[0]:
            raise ValueError(f"bad elevation_range {self.elevation_range}")
        if self.tilt_range[0] < 0 or self.tilt_range[1] < self.tilt_range[0]:
            raise ValueError(f"bad tilt_range {self.tilt_range}")
        if self.xy_range is not None and self.xy_range < 0:
            raise ValueError("xy_range must be nonnegative")

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "elevation_range": list(self.elevation_range),
            "xy_range": self.xy_range,
            "tilt_range": list(self.tilt_range),
            "count": self.count,
            "pixels_per_meter": self.pixels_per_meter,
            "base_cameras": [c.to_json() for c in self.base_cameras],
        }

    @staticmethod
    def from_json(obj: dict) -> "PlacementSpec":
        return PlacementSpec(
            strategy=obj["strategy"],
            seed=obj["seed"],
            elevation_range=tuple(obj.get("elevation_range", DEFAULT_ELEVATION_RANGE)),
            xy_range=obj.get("xy_range"),
            tilt_range=tuple(obj.get("tilt_range", DEFAULT_TILT_RANGE)),
            count=obj.get("count", 1),
            pixels_per_meter=obj.get("pixels_per_meter"),
            base_cameras=[Camera.from_json(c) for c in obj.get("base_cameras", [])],
        )


def _effective_xy_range(spec: PlacementSpec, geometry: GridGeometry) -> float:
    half_max_extent = float(max(geometry.extent[0], geometry.extent[1])) / 2.0
    if spec.xy_range is None:
        return half_max_extent
    return min(spec.xy_range, half_max_extent)


def place_cameras(
    spec: PlacementSpec,
    geometry: GridGeometry,
    error_volume: np.ndarray | None = None,
) -> list[Camera]:
    """Produce the virtual cameras of one placement strategy.

    sensor          base cameras unchanged
    elevated        base cameras raised by a sampled dz and tilted down
    elevated_around elevated plus a bounded random xy translation
    fully_random    fresh cameras anywhere over the grid footprint
    dynamic         elevated ring position aimed at the worst-error voxel
    bev             the single fixed orthographic top-down camera
    """
    rng = np.random.default_rng(spec.seed)
    g = geometry

    if spec.strategy == "bev":
        ppm = spec.pixels_per_meter or (1.0 / g.voxel_size)
        return [make_bev_camera(g, ppm)]

    if spec.strategy in ("sensor", "elevated", "elevated_around"):
        if not spec.base_cameras:
            raise ValueError(f"strategy {spec.strategy!r} requires base_cameras")
        if spec.strategy == "sensor":
            return list(spec.base_cameras)
        out = []
        xy_cap = _effective_xy_range(spec, g)
        for cam in spec.base_cameras:
            dz = rng.uniform(*spec.elevation_range)
            tilt = rng.uniform(*spec.tilt_range)
            delta = np.array([0.0, 0.0, dz])
            if spec.strategy == "elevated_around":
                delta[0] = rng.uniform(-xy_cap, xy_cap)
                delta[1] = rng.uniform(-xy_cap, xy_cap)
            out.append(pitch_down(translate(cam, delta), tilt))
        return out

    if spec.strategy == "fully_random":
        out = []
        for _ in range(spec.count):
            out.append(_random_camera(spec, g, rng))
        return out

    if spec.strategy == "dynamic":
        if error_volume is None:
            raise ValueError("dynamic strategy requires an error_volume")
        if error_volume.shape != g.dims:
            raise ValueError(f"error_volume shape {error_volume.shape} != dims {g.dims}")
        target_idx = np.unravel_index(int(np.argmax(error_volume)), g.dims)
        target = np.asarray(g.origin) + (np.asarray(target_idx) + 0.5) * g.voxel_size
        out = []
        for _ in range(spec.count):
            out.append(_dynamic_camera(spec, g, rng, target))
        return out

    raise AssertionError(spec.strategy)


def _strategy_intrinsics(spec: PlacementSpec):
    if spec.base_cameras:
        base = spec.base_cameras[0]
        return base.intrinsics, base.image_size
    return default_pinhole_intrinsics()


def _random_camera(spec: PlacementSpec, g: GridGeometry, rng) -> Camera:
    K, size = _strategy_intrinsics(spec)
    x = rng.uniform(g.origin[0], g.origin[0] + g.extent[0])
    y = rng.uniform(g.origin[1], g.origin[1] + g.extent[1])
    z = g.origin[2] + rng.uniform(*spec.elevation_range)
    yaw = rng.uniform(0.0, 2.0 * math.pi)
    tilt = rng.uniform(*spec.tilt_range)
    R = look_rotation([math.cos(yaw), math.sin(yaw), 0.0])
    cam = Camera(
        kind=PINHOLE,
        intrinsics=K,
        extrinsics=extrinsics_from(R, [x, y, z]),
        image_size=size,
        depth_range=(0.1, _pinhole_far(g)),
    )
    return pitch_down(cam, tilt)


def _dynamic_camera(spec: PlacementSpec, g: GridGeometry, rng, target: np.ndarray) -> Camera:
    K, size = _strategy_intrinsics(spec)
    center_xy = np.asarray(g.origin[:2]) + g.extent[:2] / 2.0
    max_extent = float(max(g.extent[0], g.extent[1]))
    radius = rng.uniform(*DYNAMIC_RING_FRACTION) * max_extent
    angle = rng.uniform(0.0, 2.0 * math.pi)
    z = g.origin[2] + g.extent[2] + rng.uniform(*spec.elevation_range)
    eye = np.array([
        center_xy[0] + radius * math.cos(angle),
        center_xy[1] + radius * math.sin(angle),
        z,
    ])
    R = look_rotation(target - eye)
    return Camera(
        kind=PINHOLE,
        intrinsics=K,
        extrinsics=extrinsics_from(R, eye),
        image_size=size,
        depth_range=(0.1, _pinhole_far(g)),
    )


def pixel_rays(cam: Camera, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through every ``stride``-th pixel center.

    Returns (origins, directions) of shape (H', W', 3); directions are unit.
    Pinhole rays share the camera center; orthographic rays are parallel and
    start on the camera's z = 0 plane.
    """
    width, height = cam.image_size
    K = cam.intrinsics
    us, vs = np.meshgrid(
        np.arange(0, width, stride) + 0.5,
        np.arange(0, height, stride) + 0.5,
    )
    x = (us - K[0, 2]) / K[0, 0]
    y = (vs - K[1, 2]) / K[1, 1]
    if cam.kind == PINHOLE:
        dirs_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        dirs = dirs_cam @ cam.rotation  # row-wise R^T
        origins = np.broadcast_to(cam.center, dirs.shape).copy()
    else:
        origins_cam = np.stack([x, y, np.zeros_like(x)], axis=-1)
        origins = origins_cam @ cam.rotation + cam.center
        dirs = np.broadcast_to(cam.forward, origins.shape).copy()
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    return origins, dirs


def cameras_to_json(cams: list[Camera]) -> dict:
    return {"cameras": [c.to_json() for c in cams]}


def cameras_from_json(obj: dict) -> list[Camera]:
    return [Camera.from_json(c) for c in obj["cameras"]]


def save_cameras(cams: list[Camera], path) -> None:
    with open(path, "w") as f:
        json.dump(cameras_to_json(cams), f, indent=2)


def load_cameras(path) -> list[Camera]:
    with open(path) as f:
        return cameras_from_json(json.load(f))
