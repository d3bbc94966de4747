"""Command-line surface: render, loss, eval, verify, synth.

Machine-readable JSON lines go to stdout; human diagnostics go to stderr.
Exit codes: 0 success, 1 configuration or semantic error, 2 I/O error,
3 verification failure.

A JSON config file (--config) mirrors the flags; explicitly passed flags
win over config-file values. All sampled behavior is driven by --seed, and
identical config plus seed produces byte-identical output files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import oracle as oracle_mod
from .cameras import (
    Camera,
    PlacementSpec,
    load_cameras,
    make_bev_camera,
    place_cameras,
)
from .gaussianize import gaussianize_ground_truth, gaussianize_prediction
from .grid import GridFormatError, GridGeometry, OccupancyGrid, load_grid, save_grid, synth_scene
from .imageio import write_pfm, write_pgm, write_raw_planes
from .losses import DEFAULT_LAMBDA, loss_report
from .metrics import DEFAULT_RAY_TOLERANCES, RaySet, default_eval_cameras, evaluate, rays_from_cameras
from .renderer import RenderedView, RenderOptions, render

_SAMPLING_STRATEGIES = ("elevated", "elevated_around", "fully_random", "dynamic")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(obj: dict) -> None:
    print(json.dumps(obj), flush=True)


def _load_grid_checked(path: str, role: str) -> OccupancyGrid:
    p = Path(path)
    if not p.is_file():
        raise CliError(1, f"{role} grid file does not exist: {path}")
    try:
        return load_grid(p)
    except GridFormatError as e:
        raise CliError(2, f"cannot read {role} grid {path}: {e}") from e
    except OSError as e:
        raise CliError(2, f"cannot read {role} grid {path}: {e}") from e


def _merged(args: argparse.Namespace, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if getattr(args, "_config", None) and key in args._config:
        return args._config[key]
    return default


def _resolve_config(args: argparse.Namespace) -> None:
    cfg_path = getattr(args, "config", None)
    args._config = {}
    if cfg_path:
        p = Path(cfg_path)
        if not p.is_file():
            raise CliError(1, f"config file does not exist: {cfg_path}")
        try:
            with open(p) as f:
                args._config = json.load(f)
        except json.JSONDecodeError as e:
            raise CliError(1, f"config file is not valid JSON: {e}") from e


def _render_options(args: argparse.Namespace, record_trace: bool = False) -> RenderOptions:
    return RenderOptions(
        alpha_cutoff=float(_merged(args, "alpha_cutoff", 1.0 / 255.0)),
        alpha_clamp=float(_merged(args, "alpha_clamp", 0.99)),
        early_stop=float(_merged(args, "early_stop", 1e-4)),
        tile_size=int(_merged(args, "tile_size", 16)),
        record_trace=record_trace,
    )


def _resolve_cameras(args: argparse.Namespace, geometry: GridGeometry, need_pair: bool):
    """Camera list from --cameras, --strategy, or the documented defaults.

    When ``need_pair`` (loss pipeline) the result is the (bev, cam) tuple.
    """
    cameras_path = _merged(args, "cameras")
    strategy = _merged(args, "strategy")
    seed = _merged(args, "seed")
    ppm = _merged(args, "ppm")

    if cameras_path:
        p = Path(cameras_path)
        if not p.is_file():
            raise CliError(1, f"camera file does not exist: {cameras_path}")
        try:
            cams = load_cameras(p)
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise CliError(1, f"bad camera JSON {cameras_path}: {e}") from e
    elif strategy:
        if strategy in _SAMPLING_STRATEGIES and seed is None:
            raise CliError(1, f"strategy {strategy!r} samples and requires --seed")
        spec = PlacementSpec(
            strategy=strategy,
            seed=int(seed if seed is not None else 0),
            pixels_per_meter=ppm,
            base_cameras=default_eval_cameras(geometry)
            if strategy in ("sensor", "elevated", "elevated_around")
            else [],
        )
        try:
            cams = place_cameras(spec, geometry)
        except ValueError as e:
            raise CliError(1, str(e)) from e
    else:
        if need_pair:
            if seed is None:
                raise CliError(1, "default camera pair samples a view and requires --seed")
            spec = PlacementSpec(
                strategy="elevated_around", seed=int(seed),
                base_cameras=[default_eval_cameras(geometry)[0]],
            )
            cams = place_cameras(spec, geometry)
        else:
            cams = []

    if need_pair:
        bevs = [c for c in cams if c.kind == "orthographic"]
        others = [c for c in cams if c.kind == "pinhole"]
        bev = bevs[0] if bevs else make_bev_camera(geometry, ppm or 1.0 / geometry.voxel_size)
        if not others:
            raise CliError(1, "loss needs one perspective camera besides the BeV camera")
        return bev, others[0]
    if not cams:
        cams = [make_bev_camera(geometry, ppm or 1.0 / geometry.voxel_size)]
    return cams


def _gt_cache_key(grid: OccupancyGrid, cam: Camera, scale, opts: RenderOptions) -> str:
    h = hashlib.sha256()
    h.update(grid.content_hash().encode())
    h.update(cam.json_hash_key().encode())
    h.update(repr((scale, opts.alpha_cutoff, opts.alpha_clamp, opts.early_stop)).encode())
    return h.hexdigest()


def _cached_gt_views(args, gt_grid, cams_by_label, scale, opts, out_dir: Path):
    """Render (or reload) ground-truth views keyed by content hashes."""
    if not _merged(args, "cache_gt", False):
        return None
    cache_dir = out_dir / "gt_cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    gt_set = None
    views = {}
    for label, cam in cams_by_label.items():
        key = _gt_cache_key(gt_grid, cam, scale, opts)
        path = cache_dir / f"{key}.npz"
        if path.is_file():
            data = np.load(path)
            views[label] = RenderedView(
                sem=data["sem"], depth=data["depth"],
                residual_transmittance=data["resid"], trace=None,
            )
            _emit({"event": "gt_cache", "camera": label, "hit": True})
        else:
            if gt_set is None:
                gt_set = gaussianize_ground_truth(gt_grid, scale)
            view = render(cam, gt_set, opts)
            np.savez(path, sem=view.sem, depth=view.depth, resid=view.residual_transmittance)
            views[label] = view
            _emit({"event": "gt_cache", "camera": label, "hit": False})
    return views


def _out_dir(args) -> Path:
    out = Path(_merged(args, "out", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(2, f"cannot create output directory {out}: {e}") from e
    return out


def cmd_render(args: argparse.Namespace) -> int:
    pred_path = _merged(args, "pred")
    gt_path = _merged(args, "gt")
    if (pred_path is None) == (gt_path is None):
        raise CliError(1, "render needs exactly one grid: --pred (logits) or --gt (labels)")
    out = _out_dir(args)
    scale = _merged(args, "scale")
    opts = _render_options(args)

    if pred_path:
        grid = _load_grid_checked(pred_path, "prediction")
        if grid.logits is None:
            raise CliError(1, "--pred expects a logits grid (payload kind 1)")
        gset = gaussianize_prediction(grid, scale)
    else:
        grid = _load_grid_checked(gt_path, "ground-truth")
        if grid.labels is None:
            raise CliError(1, "--gt expects a labels grid (payload kind 0)")
        gset = gaussianize_ground_truth(grid, scale)

    cams = _resolve_cameras(args, grid.geometry, need_pair=False)
    dump_probs = _merged(args, "dump_probs", False)
    for i, cam in enumerate(cams):
        t0 = time.perf_counter()
        view = render(cam, gset, opts)
        dt = time.perf_counter() - t0
        try:
            write_pfm(out / f"cam{i}_depth.pfm", view.depth)
            classes = np.argmax(view.sem, axis=2)
            write_pgm(out / f"cam{i}_sem.pgm", classes, grid.geometry.num_classes)
            if dump_probs:
                write_raw_planes(out / f"cam{i}_probs.f32", view.sem)
        except OSError as e:
            raise CliError(2, f"cannot write render outputs to {out}: {e}") from e
        _emit({
            "event": "render", "camera": i, "kind": cam.kind,
            "image": list(cam.image_size), "num_primitives": len(gset),
            "seconds": round(dt, 6),
        })
    return 0


def cmd_loss(args: argparse.Namespace) -> int:
    pred_path = _merged(args, "pred")
    gt_path = _merged(args, "gt")
    if not pred_path or not gt_path:
        raise CliError(1, "loss needs --pred (logits) and --gt (labels)")
    pred = _load_grid_checked(pred_path, "prediction")
    gt = _load_grid_checked(gt_path, "ground-truth")
    if pred.geometry != gt.geometry:
        raise CliError(1, f"geometry mismatch: pred {pred.geometry.dims} vs gt {gt.geometry.dims}")
    if pred.logits is None or gt.labels is None:
        raise CliError(1, "loss needs logits for --pred and labels for --gt")

    lam = _merged(args, "lam")
    lam = DEFAULT_LAMBDA if lam is None else float(lam)
    if lam < 0:
        raise CliError(1, f"lambda must be nonnegative, got {lam}")
    scale = _merged(args, "scale")
    out = _out_dir(args)
    opts = _render_options(args)

    bev, cam = _resolve_cameras(args, pred.geometry, need_pair=True)
    gt_views = _cached_gt_views(args, gt, {"bev": bev, "cam": cam}, scale, opts, out)

    t0 = time.perf_counter()
    report = loss_report(pred, gt, (bev, cam), scale, lam, opts, gt_views=gt_views)
    dt = time.perf_counter() - t0
    try:
        with open(out / "loss.json", "w") as f:
            f.write(report.dumps())
        if _merged(args, "dump_grads", False):
            g = pred.geometry
            grads = np.ascontiguousarray(report.logit_grads, dtype="<f4")
            with open(out / "logit_grads.f32", "wb") as f:
                f.write(grads.tobytes())
            with open(out / "logit_grads.f32.json", "w") as f:
                json.dump({"dims": list(g.dims), "num_classes": g.num_classes,
                           "dtype": "float32-le", "layout": "x,y,z,class row-major"}, f, indent=2)
    except OSError as e:
        raise CliError(2, f"cannot write loss outputs to {out}: {e}") from e
    _emit({"event": "loss", "total": report.total, "l2d": report.l2d,
           "l3d": report.l3d, "lambda": report.lam, "seconds": round(dt, 6)})
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    pred_path = _merged(args, "pred")
    gt_path = _merged(args, "gt")
    if not pred_path or not gt_path:
        raise CliError(1, "eval needs --pred and --gt label grids")
    pred = _load_grid_checked(pred_path, "prediction")
    gt = _load_grid_checked(gt_path, "ground-truth")
    if pred.geometry != gt.geometry:
        raise CliError(1, f"geometry mismatch: pred {pred.geometry.dims} vs gt {gt.geometry.dims}")
    if pred.labels is None or gt.labels is None:
        raise CliError(1, "eval compares label grids (render + argmax predictions first)")

    tolerances = _merged(args, "tolerances") or list(DEFAULT_RAY_TOLERANCES)
    ppm = _merged(args, "ppm")
    stride = int(_merged(args, "stride", 4))
    out = _out_dir(args)

    cameras_path = _merged(args, "cameras")
    if cameras_path:
        p = Path(cameras_path)
        if not p.is_file():
            raise CliError(1, f"camera file does not exist: {cameras_path}")
        cams = load_cameras(p)
    else:
        cams = default_eval_cameras(pred.geometry)
    rays = rays_from_cameras(cams, stride)

    try:
        report = evaluate(pred, gt, rays, tolerances, ppm)
    except ValueError as e:
        raise CliError(1, str(e)) from e
    try:
        with open(out / "metrics.json", "w") as f:
            f.write(report.dumps())
        with open(out / "metrics.csv", "w") as f:
            f.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    except OSError as e:
        raise CliError(2, f"cannot write metrics to {out}: {e}") from e
    _emit({"event": "eval", "iou": report.iou, "miou": report.miou,
           "rayiou": report.rayiou, "bev_iou": report.bev_iou, "bev_miou": report.bev_miou,
           "rays": len(rays)})
    return 0


def _verify_checks(seeds: int):
    """Yield (name, passed, detail) for every release-gate check."""
    from .oracle import GRADCHECK_RENDER_OPTIONS, OracleConfig, fd_gradcheck, naive_splat, raymarch_reference
    from .cameras import extrinsics_from, look_rotation

    geom = GridGeometry((8, 8, 8), (0.0, 0.0, 0.0), 1.0, 4, 0)
    fixtures = {
        "empty": synth_scene(geom, "empty"),
        "single_voxel": synth_scene(geom, "single_voxel", index=(4, 4, 4), cls=2),
        "floor": synth_scene(geom, "floor_plane", z_index=0, cls=1),
        "box": synth_scene(geom, "box", min_index=(2, 2, 2), max_index=(5, 5, 5), cls=3),
        "two_walls": synth_scene(geom, "two_walls", front_x=2, back_x=6, classes=(1, 2)),
    }
    poses = [make_bev_camera(geom, 2.0)]
    for k, eye in enumerate([(-6, 4, 6), (4, -6, 5), (12, 12, 8), (4, 4, 14)]):
        w = h = 48
        fx = w / (2.0 * math.tan(math.radians(30)))
        K = np.array([[fx, 0, w / 2], [0, fx, h / 2], [0, 0, 1.0]])
        eye = np.asarray(eye, dtype=np.float64)
        cams_R = look_rotation(np.array([4.0, 4.0, 3.0]) - eye)
        poses.append(Camera(kind="pinhole", intrinsics=K,
                            extrinsics=extrinsics_from(cams_R, eye),
                            image_size=(w, h), depth_range=(0.1, 30.0)))

    # tiled renderer vs the single-loop reference
    worst = 0.0
    for grid in fixtures.values():
        gset = gaussianize_ground_truth(grid)
        for cam in poses:
            a = render(cam, gset)
            b = naive_splat(cam, gset)
            worst = max(
                worst,
                float(np.abs(a.sem - b.sem).max()),
                float(np.abs(a.depth - b.depth).max()),
            )
    yield "tile_vs_naive", worst <= 1e-6, f"max deviation {worst:.2e}"

    # compositing invariants on every fixture/pose
    worst_sum = 0.0
    depth_ok = True
    for grid in fixtures.values():
        gset = gaussianize_ground_truth(grid)
        for cam in poses:
            view = render(cam, gset)
            worst_sum = max(worst_sum, float(np.abs(view.sem.sum(axis=2) - 1.0).max()))
            far = cam.depth_range[1]
            depth_ok = depth_ok and bool((view.depth >= 0).all() and (view.depth <= far + 1e-9).all())
    yield "compositing_conservation", worst_sum <= 1e-5 and depth_ok, f"max |sum-1| {worst_sum:.2e}"

    # permutation invariance of the input order
    gset = gaussianize_ground_truth(fixtures["two_walls"])
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(gset))
    from .gaussianize import GaussianSet
    shuffled = GaussianSet(
        geometry=gset.geometry, mu=gset.mu[perm], scale=gset.scale,
        class_probs=gset.class_probs[perm], opacity=gset.opacity[perm],
        mode=gset.mode, source_index=gset.source_index[perm],
    )
    a = render(poses[1], gset)
    b = render(poses[1], shuffled)
    dev = float(np.abs(a.sem - b.sem).max())
    yield "permutation_invariance", dev == 0.0, f"max deviation {dev:.2e}"

    # analytic gradients vs finite differences
    ggeom = GridGeometry((4, 4, 4), (0.0, 0.0, 0.0), 1.0, 4, 0)
    ggt = synth_scene(ggeom, "box", min_index=(1, 1, 0), max_index=(2, 2, 1), cls=2)
    gbev = make_bev_camera(ggeom, 2.0)
    w = h = 8
    fx = w / (2.0 * math.tan(math.radians(30)))
    K = np.array([[fx, 0, w / 2], [0, fx, h / 2], [0, 0, 1.0]])
    base = Camera(kind="pinhole", intrinsics=K,
                  extrinsics=extrinsics_from(look_rotation([1.0, 0.0, 0.0]), [-2.0, 2.0, 1.0]),
                  image_size=(w, h), depth_range=(0.1, 15.0))
    worst_grad = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        pred = OccupancyGrid(ggeom, logits=rng.uniform(-1.5, 1.5, size=(4, 4, 4, 4)))
        cam = place_cameras(
            PlacementSpec(strategy="elevated", seed=seed, base_cameras=[base]), ggeom
        )[0]
        rep = fd_gradcheck(pred, ggt, (gbev, cam))
        worst_grad = max(worst_grad, rep.max_rel_err)
    yield "gradcheck", worst_grad < 1e-4, f"max rel err {worst_grad:.2e} over {seeds} seeds"

    # splat renderer vs the volumetric ray-marching oracle, viewing the
    # opaque front wall face-on at roughly a pixel per voxel and with every
    # pixel center inside the wall footprint (the regime where the wall of
    # spheres is pixel-opaque; the two renderers agree only in the
    # opaque-surface limit, not in silhouette fringes)
    walls = gaussianize_ground_truth(fixtures["two_walls"])
    eye = np.array([-2.0, 4.0, 4.0])
    w = h = 6
    fx = 0.8 * 4.5  # ~0.8 px per voxel at the front-wall distance
    K = np.array([[fx, 0, w / 2], [0, fx, h / 2], [0, 0, 1.0]])
    cam = Camera(kind="pinhole", intrinsics=K,
                 extrinsics=extrinsics_from(look_rotation(np.array([1.0, 0.0, 0.0])), eye),
                 image_size=(w, h), depth_range=(0.1, 20.0))
    fast = render(cam, walls)
    slow = raymarch_reference(cam, walls, OracleConfig(step_size=0.05))
    mean_depth_dev = float(np.abs(fast.depth - slow.depth).mean())
    back_mass = float(fast.sem[:, :, 2].max())  # back wall carries class 2
    ok = mean_depth_dev < geom.voxel_size and back_mass < 0.01
    yield "raymarch_opaque_depth", ok, f"mean |depth dev| {mean_depth_dev:.3f} m, back-wall mass {back_mass:.4f}"


def cmd_verify(args: argparse.Namespace) -> int:
    seeds = int(_merged(args, "sweep", 5))
    failed = []
    for name, ok, detail in _verify_checks(seeds):
        _emit({"event": "verify", "check": name, "pass": bool(ok), "detail": detail})
        _info(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        _info("verification failed: " + ", ".join(failed))
        return 3
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out_path = _merged(args, "out")
    if not out_path:
        raise CliError(1, "synth needs --out for the OCCG file")
    dims = _merged(args, "dims", [8, 8, 8])
    origin = _merged(args, "origin", [0.0, 0.0, 0.0])
    try:
        geom = GridGeometry(
            tuple(int(v) for v in dims),
            tuple(float(v) for v in origin),
            float(_merged(args, "voxel_size", 1.0)),
            int(_merged(args, "num_classes", 4)),
            int(_merged(args, "empty_class", 0)),
        )
    except ValueError as e:
        raise CliError(1, str(e)) from e

    scene = _merged(args, "scene", "empty")
    params = {}
    if scene == "single_voxel":
        params = {"index": _merged(args, "index", [0, 0, 0]), "cls": _merged(args, "cls", 1)}
    elif scene == "floor_plane":
        params = {"z_index": _merged(args, "z_index", 0), "cls": _merged(args, "cls", 1)}
    elif scene == "box":
        params = {
            "min_index": _merged(args, "min_index", [0, 0, 0]),
            "max_index": _merged(args, "max_index", [1, 1, 1]),
            "cls": _merged(args, "cls", 1),
        }
    elif scene == "two_walls":
        params = {
            "front_x": _merged(args, "front_x", 1),
            "back_x": _merged(args, "back_x", 2),
            "classes": _merged(args, "classes", [1, 2]),
        }
    try:
        grid = synth_scene(geom, scene, **params)
    except ValueError as e:
        raise CliError(1, str(e)) from e

    if _merged(args, "as_logits", False):
        sat = float(_merged(args, "saturation", 10.0))
        onehot = np.full(geom.dims + (geom.num_classes,), -sat, dtype=np.float32)
        labels = grid.labels.astype(np.int64)
        xi, yi, zi = np.meshgrid(*(np.arange(d) for d in geom.dims), indexing="ij")
        onehot[xi, yi, zi, labels] = sat
        grid = OccupancyGrid(geom, logits=onehot)

    try:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        save_grid(grid, out_path)
    except OSError as e:
        raise CliError(2, f"cannot write grid to {out_path}: {e}") from e
    _emit({"event": "synth", "scene": scene, "dims": list(geom.dims),
           "kind": grid.kind, "path": str(out_path)})
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file mirroring the flags (flags win)")
    p.add_argument("--pred", help="prediction OCCG file")
    p.add_argument("--gt", help="ground-truth OCCG file")
    p.add_argument("--cameras", help="camera list JSON file")
    p.add_argument("--strategy", choices=PlacementSpec.STRATEGIES, help="camera placement strategy")
    p.add_argument("--scale", type=float, help="Gaussian stddev override (default: voxel_size/2)")
    p.add_argument("--lambda", dest="lam", type=float, help="2D loss weight (default 15)")
    p.add_argument("--seed", type=int, help="RNG seed for sampled strategies")
    p.add_argument("--out", help="output directory (or file for synth)")
    p.add_argument("--tolerances", type=float, nargs="+", help="ray IoU depth tolerances in meters")
    p.add_argument("--ppm", type=float, help="BeV pixels per meter (default: one pixel per voxel)")
    p.add_argument("--cache-gt", dest="cache_gt", action="store_const", const=True,
                   help="cache ground-truth renders keyed by content hashes")
    p.add_argument("--dump-probs", dest="dump_probs", action="store_const", const=True,
                   help="also dump full probability planes as raw f32")
    p.add_argument("--dump-grads", dest="dump_grads", action="store_const", const=True,
                   help="dump per-voxel logit gradients as raw f32")
    p.add_argument("--stride", type=int, help="pixel stride for camera-derived rays (default 4)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsplat",
        description="Differentiable Gaussian-splatting rendering, losses and metrics for occupancy grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a grid through one or more cameras")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("loss", help="two-camera rendering loss plus voxel cross-entropy")
    _add_common(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="voxel, ray and BeV metrics between two label grids")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the oracle release gate")
    _add_common(p)
    p.add_argument("--sweep", type=int, help="number of gradcheck seeds (default 5)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write a synthetic OCCG fixture")
    _add_common(p)
    p.add_argument("--dims", type=int, nargs=3)
    p.add_argument("--origin", type=float, nargs=3)
    p.add_argument("--voxel-size", dest="voxel_size", type=float)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--empty-class", dest="empty_class", type=int)
    p.add_argument("--scene", choices=["empty", "single_voxel", "floor_plane", "box", "two_walls"])
    p.add_argument("--index", type=int, nargs=3)
    p.add_argument("--cls", type=int)
    p.add_argument("--z-index", dest="z_index", type=int)
    p.add_argument("--min-index", dest="min_index", type=int, nargs=3)
    p.add_argument("--max-index", dest="max_index", type=int, nargs=3)
    p.add_argument("--front-x", dest="front_x", type=int)
    p.add_argument("--back-x", dest="back_x", type=int)
    p.add_argument("--classes", type=int, nargs=2)
    p.add_argument("--as-logits", dest="as_logits", action="store_const", const=True)
    p.add_argument("--saturation", type=float)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _resolve_config(args)
        return args.func(args)
    except CliError as e:
        _info(f"error: {e}")
        return e.code
    except ValueError as e:
        _info(f"error: {e}")
        return 1
    except OSError as e:
        _info(f"I/O error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
