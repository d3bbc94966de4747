"""Render export formats: PFM depth maps, PGM class maps, raw f32 dumps.

PFM rows are stored bottom-to-top with a negative scale marking
little-endian data, per the portable-float-map convention. PGM class maps
use one byte per pixel up to 256 classes and big-endian two-byte samples
beyond that. Probability planes dump as raw little-endian float32 with a
JSON sidecar describing the shape.
"""

from __future__ import annotations

import json

import numpy as np


def write_pfm(path, image: np.ndarray) -> None:
    """Write a single-channel float image as little-endian PFM."""
    if image.ndim != 2:
        raise ValueError(f"PFM writer expects a 2D array, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(image).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError("not a grayscale PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(), dtype="<f4" if scale < 0 else ">f4")
    if data.size != w * h:
        raise ValueError("PFM payload size mismatch")
    return np.flipud(data.reshape(h, w)).astype(np.float64)


def write_pgm(path, classes: np.ndarray, num_classes: int) -> None:
    """Write a class-index image as binary PGM."""
    if classes.ndim != 2:
        raise ValueError(f"PGM writer expects a 2D array, got shape {classes.shape}")
    h, w = classes.shape
    maxval = 255 if num_classes <= 256 else 65535
    payload = classes.astype(">u2" if maxval > 255 else "u1").tobytes()
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(payload)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"P5":
            raise ValueError("not a binary PGM file")
        w, h = (int(v) for v in f.readline().split())
        maxval = int(f.readline())
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h:
        raise ValueError("PGM payload size mismatch")
    return data.reshape(h, w).astype(np.int64)


def write_raw_planes(path, planes: np.ndarray) -> None:
    """Dump an (H, W, C) float array as raw f32 plus a JSON sidecar."""
    arr = np.ascontiguousarray(planes, dtype="<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    sidecar = {
        "height": int(planes.shape[0]),
        "width": int(planes.shape[1]),
        "channels": int(planes.shape[2]) if planes.ndim == 3 else 1,
        "dtype": "float32-le",
        "layout": "row-major, channel-fastest",
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)


def read_raw_planes(path) -> np.ndarray:
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(meta["height"], meta["width"], meta["channels"]).astype(np.float64)
