"""Occupancy-grid data model, OCCG binary file format and synthetic scenes.

Conventions used throughout the package:
  - world frame is right-handed, z up, units are meters
  - grid axes are aligned with world axes; voxels are cubes of side
    ``voxel_size`` and the grid's minimum corner sits at ``origin``
  - the flat voxel order is x-fastest, then y, then z:
    ``flat = x + X * (y + Y * z)``
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"OCCG"
_VERSION = 1
_KIND_LABELS = 0
_KIND_LOGITS = 1
# magic(4) + version(u32) + kind(u8) + dims(3*u32) + origin(3*f32)
# + voxel_size(f32) + num_classes(u32) + empty_class(u32)
_HEADER = struct.Struct("<4sIB3I3ffII")


class GridFormatError(ValueError):
    """Raised for malformed OCCG files; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class GridGeometry:
    """Shape and placement of a dense voxel grid.

    ``dims`` are the (X, Y, Z) voxel counts, ``origin`` the world-space
    minimum corner and ``voxel_size`` the cubic voxel edge in meters.
    ``empty_class`` is the label index for free space.
    """

    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    voxel_size: float
    num_classes: int
    empty_class: int

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if self.voxel_size <= 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if not (0 <= self.empty_class < self.num_classes):
            raise ValueError(
                f"empty_class {self.empty_class} outside [0, {self.num_classes})"
            )
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def num_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def extent(self) -> np.ndarray:
        """World-space size of the grid along each axis (meters)."""
        return np.asarray(self.dims, dtype=np.float64) * self.voxel_size

    @property
    def max_corner(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64) + self.extent

    def voxel_centers(self) -> np.ndarray:
        """Centers of all voxels in flat (x-fastest) order, shape (N, 3)."""
        X, Y, Z = self.dims
        idx = np.arange(self.num_voxels)
        xyz = np.stack([idx % X, (idx // X) % Y, idx // (X * Y)], axis=1)
        return np.asarray(self.origin) + (xyz + 0.5) * self.voxel_size


def voxel_center(geometry: GridGeometry, index) -> np.ndarray:
    """World-space center of the voxel at integer ``index`` = (ix, iy, iz)."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != (3,):
        raise ValueError(f"index must be a triple, got {index}")
    if np.any(idx < 0) or np.any(idx >= np.asarray(geometry.dims)):
        raise IndexError(f"voxel index {tuple(idx)} outside dims {geometry.dims}")
    return np.asarray(geometry.origin) + (idx + 0.5) * geometry.voxel_size


@dataclass
class OccupancyGrid:
    """A dense semantic occupancy grid with either a labels or logits payload.

    ``labels`` has shape (X, Y, Z) and dtype uint16; ``logits`` has shape
    (X, Y, Z, C) and float dtype. Exactly one of the two is set. Files
    always store logits as float32; in memory float64 logits are accepted
    so gradient pipelines can avoid rounding.
    """

    geometry: GridGeometry
    labels: np.ndarray | None = None
    logits: np.ndarray | None = None

    def __post_init__(self):
        g = self.geometry
        if (self.labels is None) == (self.logits is None):
            raise ValueError("exactly one of labels/logits must be provided")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
            if self.labels.shape != g.dims:
                raise ValueError(
                    f"labels shape {self.labels.shape} != dims {g.dims}"
                )
            if self.labels.max(initial=0) >= g.num_classes:
                raise ValueError("label value outside [0, num_classes)")
        else:
            if self.logits.dtype not in (np.float32, np.float64):
                self.logits = np.asarray(self.logits, dtype=np.float32)
            self.logits = np.ascontiguousarray(self.logits)
            if self.logits.shape != g.dims + (g.num_classes,):
                raise ValueError(
                    f"logits shape {self.logits.shape} != {g.dims + (g.num_classes,)}"
                )
            if not np.all(np.isfinite(self.logits)):
                raise ValueError("logits payload contains non-finite values")

    @property
    def kind(self) -> str:
        return "labels" if self.labels is not None else "logits"

    def labels_flat(self) -> np.ndarray:
        """Labels in flat x-fastest order, shape (N,)."""
        return self.labels.transpose(2, 1, 0).reshape(-1)

    def logits_flat(self) -> np.ndarray:
        """Logit rows in flat x-fastest voxel order, shape (N, C)."""
        C = self.geometry.num_classes
        return self.logits.transpose(2, 1, 0, 3).reshape(-1, C)

    def content_hash(self) -> str:
        """Stable hash of geometry plus payload, used for render caching."""
        h = hashlib.sha256()
        g = self.geometry
        h.update(repr((g.dims, g.origin, g.voxel_size, g.num_classes, g.empty_class)).encode())
        if self.labels is not None:
            h.update(b"labels")
            h.update(self.labels.tobytes())
        else:
            h.update(b"logits")
            h.update(np.ascontiguousarray(self.logits).tobytes())
        return h.hexdigest()


def unflatten_field(geometry: GridGeometry, flat: np.ndarray) -> np.ndarray:
    """Reshape a flat per-voxel field (N, ...) back to (X, Y, Z, ...)."""
    X, Y, Z = geometry.dims
    tail = flat.shape[1:]
    return flat.reshape((Z, Y, X) + tail).transpose((2, 1, 0) + tuple(range(3, 3 + len(tail))))


def save_grid(grid: OccupancyGrid, path) -> None:
    """Write ``grid`` to ``path`` in the OCCG binary format (little-endian)."""
    g = grid.geometry
    kind = _KIND_LABELS if grid.labels is not None else _KIND_LOGITS
    header = _HEADER.pack(
        _MAGIC, _VERSION, kind, *g.dims, *g.origin, g.voxel_size,
        g.num_classes, g.empty_class,
    )
    if grid.labels is not None:
        payload = grid.labels_flat().astype("<u2").tobytes()
    else:
        payload = grid.logits_flat().astype("<f4").reshape(-1).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_grid(path) -> OccupancyGrid:
    """Read and validate an OCCG file; errors report the byte offset."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise GridFormatError("file shorter than OCCG header", len(data))
    magic, version, kind, dx, dy, dz, ox, oy, oz, vs, nc, ec = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise GridFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", 0)
    if version != _VERSION:
        raise GridFormatError(f"unsupported OCCG version {version}", 4)
    if kind not in (_KIND_LABELS, _KIND_LOGITS):
        raise GridFormatError(f"unknown payload kind {kind}", 8)
    try:
        geometry = GridGeometry((dx, dy, dz), (ox, oy, oz), vs, nc, ec)
    except ValueError as e:
        raise GridFormatError(f"invalid header fields: {e}", 9) from e

    n = geometry.num_voxels
    body = data[_HEADER.size:]
    if kind == _KIND_LABELS:
        expect = 2 * n
        if len(body) != expect:
            raise GridFormatError(
                f"labels payload holds {len(body)} bytes, expected {expect}",
                _HEADER.size + min(len(body), expect),
            )
        flat = np.frombuffer(body, dtype="<u2")
        bad = np.nonzero(flat >= nc)[0]
        if bad.size:
            raise GridFormatError(
                f"label {int(flat[bad[0]])} >= num_classes {nc}",
                _HEADER.size + 2 * int(bad[0]),
            )
        labels = flat.reshape(dz, dy, dx).transpose(2, 1, 0)
        return OccupancyGrid(geometry, labels=labels)

    expect = 4 * n * nc
    if len(body) != expect:
        raise GridFormatError(
            f"logits payload holds {len(body)} bytes, expected {expect}",
            _HEADER.size + min(len(body), expect),
        )
    flat = np.frombuffer(body, dtype="<f4")
    bad = np.nonzero(~np.isfinite(flat))[0]
    if bad.size:
        raise GridFormatError(
            f"non-finite logit at flat position {int(bad[0])}",
            _HEADER.size + 4 * int(bad[0]),
        )
    logits = flat.reshape(dz, dy, dx, nc).transpose(2, 1, 0, 3)
    return OccupancyGrid(geometry, logits=np.ascontiguousarray(logits))


def synth_scene(geometry: GridGeometry, kind: str, **params) -> OccupancyGrid:
    """Deterministic labelled test scenes.

    Supported kinds:
      - ``empty``: every voxel labelled ``empty_class``
      - ``single_voxel(index, cls)``: one occupied voxel
      - ``floor_plane(z_index, cls)``: one full xy plane
      - ``box(min_index, max_index, cls)``: filled axis-aligned box,
        inclusive corners
      - ``two_walls(front_x, back_x, classes)``: two full yz planes
    """
    g = geometry
    labels = np.full(g.dims, g.empty_class, dtype=np.uint16)

    def check_cls(c):
        c = int(c)
        if not (0 <= c < g.num_classes):
            raise ValueError(f"class {c} outside [0, {g.num_classes})")
        return c

    def check_idx(idx):
        idx = tuple(int(v) for v in idx)
        if any(v < 0 or v >= d for v, d in zip(idx, g.dims)):
            raise ValueError(f"index {idx} outside dims {g.dims}")
        return idx

    if kind == "empty":
        pass
    elif kind == "single_voxel":
        ix, iy, iz = check_idx(params["index"])
        labels[ix, iy, iz] = check_cls(params["cls"])
    elif kind == "floor_plane":
        z = int(params["z_index"])
        if not (0 <= z < g.dims[2]):
            raise ValueError(f"z_index {z} outside dims {g.dims}")
        labels[:, :, z] = check_cls(params["cls"])
    elif kind == "box":
        lo = check_idx(params["min_index"])
        hi = check_idx(params["max_index"])
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box min_index {lo} exceeds max_index {hi}")
        labels[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = check_cls(params["cls"])
    elif kind == "two_walls":
        fx, bx = int(params["front_x"]), int(params["back_x"])
        c_front, c_back = params["classes"]
        for x in (fx, bx):
            if not (0 <= x < g.dims[0]):
                raise ValueError(f"wall x-index {x} outside dims {g.dims}")
        labels[fx, :, :] = check_cls(c_front)
        labels[bx, :, :] = check_cls(c_back)
    else:
        raise ValueError(f"unknown scene kind {kind!r}")

    return OccupancyGrid(geometry, labels=labels)
