import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxsplat.grid import (
    GridFormatError,
    GridGeometry,
    OccupancyGrid,
    load_grid,
    save_grid,
    synth_scene,
    unflatten_field,
    voxel_center,
)

HEADER = struct.Struct("<4sIB3I3ffII")


def make_header(kind, dims, origin=(0.0, 0.0, 0.0), voxel_size=1.0, num_classes=4, empty=0):
    return HEADER.pack(b"OCCG", 1, kind, *dims, *origin, voxel_size, num_classes, empty)


class TestGeometry:
    def test_invariants(self):
        with pytest.raises(ValueError):
            GridGeometry((0, 1, 1), (0, 0, 0), 1.0, 2, 0)
        with pytest.raises(ValueError):
            GridGeometry((1, 1, 1), (0, 0, 0), 0.0, 2, 0)
        with pytest.raises(ValueError):
            GridGeometry((1, 1, 1), (0, 0, 0), 1.0, 2, 2)

    def test_extent_contains_centers(self):
        g = GridGeometry((3, 4, 5), (-1.0, 2.0, 0.0), 0.5, 3, 0)
        centers = g.voxel_centers()
        assert np.all(centers > np.asarray(g.origin))
        assert np.all(centers < g.max_corner)


class TestVoxelCenter:
    def test_unit_origin(self):
        g = GridGeometry((2, 2, 2), (0, 0, 0), 1.0, 2, 0)
        assert np.allclose(voxel_center(g, (0, 0, 0)), (0.5, 0.5, 0.5))

    def test_surroundocc_geometry(self):
        # 200x200x16 over [-50,50]^2 x [-5,3] at half-meter voxels
        g = GridGeometry((200, 200, 16), (-50.0, -50.0, -5.0), 0.5, 17, 0)
        assert np.allclose(voxel_center(g, (0, 0, 0)), (-49.75, -49.75, -4.75))

    def test_fine_grid_upper_corner(self):
        g = GridGeometry((256, 256, 32), (0.0, 0.0, 0.0), 0.2, 19, 0)
        assert np.allclose(voxel_center(g, (255, 255, 31)), (51.1, 51.1, 6.3))

    def test_out_of_bounds(self):
        g = GridGeometry((2, 2, 2), (0, 0, 0), 1.0, 2, 0)
        with pytest.raises(IndexError):
            voxel_center(g, (2, 0, 0))

    @given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6),
           st.sampled_from([0, 1, 2]))
    def test_adjacent_centers_differ_by_voxel_size(self, x, y, z, axis):
        g = GridGeometry((8, 8, 8), (-3.0, 1.0, 0.5), 0.7, 3, 0)
        idx = np.array([x, y, z])
        nxt = idx.copy()
        nxt[axis] += 1
        delta = voxel_center(g, nxt) - voxel_center(g, idx)
        expected = np.zeros(3)
        expected[axis] = g.voxel_size
        assert np.allclose(delta, expected, atol=1e-12)


class TestFormat:
    def test_minimal_file(self, tmp_path):
        p = tmp_path / "min.occg"
        p.write_bytes(make_header(0, (1, 1, 1), num_classes=2) + struct.pack("<H", 0))
        grid = load_grid(p)
        assert grid.kind == "labels"
        assert grid.labels.shape == (1, 1, 1)
        assert grid.labels[0, 0, 0] == 0

    def test_logits_fixture(self, tmp_path):
        p = tmp_path / "logits.occg"
        values = np.arange(24, dtype="<f4") / 10.0
        p.write_bytes(make_header(1, (2, 2, 2), num_classes=3) + values.tobytes())
        grid = load_grid(p)
        assert grid.kind == "logits"
        assert grid.logits.shape == (2, 2, 2, 3)
        # file order is class-fastest within voxel, x-fastest across voxels
        assert grid.logits[0, 0, 0, 1] == np.float32(0.1)
        assert grid.logits[1, 0, 0, 0] == np.float32(0.3)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.occg"
        p.write_bytes(make_header(0, (2, 2, 2), num_classes=2) + b"\x00" * 14)
        with pytest.raises(GridFormatError) as e:
            load_grid(p)
        assert "14" in str(e.value)
        assert e.value.offset == HEADER.size + 14

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.occg"
        p.write_bytes(b"XXXX" + make_header(0, (1, 1, 1))[4:] + b"\x00\x00")
        with pytest.raises(GridFormatError) as e:
            load_grid(p)
        assert e.value.offset == 0

    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "range.occg"
        p.write_bytes(make_header(0, (2, 1, 1), num_classes=2) + struct.pack("<HH", 0, 9))
        with pytest.raises(GridFormatError) as e:
            load_grid(p)
        assert e.value.offset == HEADER.size + 2

    def test_non_finite_logit(self, tmp_path):
        p = tmp_path / "nan.occg"
        vals = np.array([0.0, np.nan], dtype="<f4")
        p.write_bytes(make_header(1, (1, 1, 1), num_classes=2) + vals.tobytes())
        with pytest.raises(GridFormatError) as e:
            load_grid(p)
        assert e.value.offset == HEADER.size + 4

    def test_payload_is_x_fastest(self, tmp_path):
        g = GridGeometry((2, 2, 2), (0, 0, 0), 1.0, 3, 0)
        labels = np.zeros((2, 2, 2), dtype=np.uint16)
        labels[1, 0, 0] = 1  # flat index 1
        labels[0, 1, 0] = 2  # flat index 2
        p = tmp_path / "order.occg"
        save_grid(OccupancyGrid(g, labels=labels), p)
        payload = np.frombuffer(p.read_bytes()[HEADER.size:], dtype="<u2")
        assert list(payload[:4]) == [0, 1, 2, 0]

    def test_roundtrip_labels_byte_identical(self, tmp_path):
        g = GridGeometry((4, 4, 4), (0, 0, 0), 0.5, 5, 1)
        rng = np.random.default_rng(3)
        grid = OccupancyGrid(g, labels=rng.integers(0, 5, size=(4, 4, 4), dtype=np.uint16))
        p1, p2 = tmp_path / "a.occg", tmp_path / "b.occg"
        save_grid(grid, p1)
        save_grid(load_grid(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_roundtrip_logit_values_exact(self, tmp_path):
        g = GridGeometry((1, 1, 1), (0, 0, 0), 1.0, 3, 0)
        grid = OccupancyGrid(g, logits=np.array([[[[-1.5, 0.0, 2.25]]]], dtype=np.float32))
        p = tmp_path / "g.occg"
        save_grid(grid, p)
        back = load_grid(p)
        assert np.array_equal(back.logits, grid.logits)

    def test_save_unwritable(self, tmp_path):
        g = GridGeometry((1, 1, 1), (0, 0, 0), 1.0, 2, 0)
        grid = OccupancyGrid(g, labels=np.zeros((1, 1, 1), dtype=np.uint16))
        with pytest.raises(OSError):
            save_grid(grid, tmp_path / "missing" / "dir" / "g.occg")

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
           st.integers(2, 5), st.integers(0, 1), st.integers(0, 2**32 - 1))
    def test_roundtrip_random_grids(self, x, y, z, C, kind, seed):
        import tempfile

        g = GridGeometry((x, y, z), (-1.0, 0.0, 2.0), 0.25, C, min(C - 1, 1))
        rng = np.random.default_rng(seed)
        if kind == 0:
            grid = OccupancyGrid(g, labels=rng.integers(0, C, size=(x, y, z), dtype=np.uint16))
        else:
            grid = OccupancyGrid(g, logits=rng.normal(size=(x, y, z, C)).astype(np.float32))
        with tempfile.NamedTemporaryFile(suffix=".occg") as f:
            save_grid(grid, f.name)
            back = load_grid(f.name)
        assert back.geometry == grid.geometry
        if kind == 0:
            assert np.array_equal(back.labels, grid.labels)
        else:
            assert np.array_equal(back.logits, grid.logits)


class TestSynthScenes:
    def test_empty(self, unit_geom):
        grid = synth_scene(unit_geom, "empty")
        assert np.all(grid.labels == unit_geom.empty_class)

    def test_single_voxel(self, unit_geom):
        grid = synth_scene(unit_geom, "single_voxel", index=(4, 4, 4), cls=2)
        assert int(np.sum(grid.labels != 0)) == 1
        assert grid.labels[4, 4, 4] == 2

    def test_two_walls_count(self, unit_geom):
        grid = synth_scene(unit_geom, "two_walls", front_x=2, back_x=6, classes=(1, 2))
        assert int(np.sum(grid.labels != 0)) == 2 * 64

    def test_floor_plane_count(self, unit_geom):
        grid = synth_scene(unit_geom, "floor_plane", z_index=0, cls=1)
        assert int(np.sum(grid.labels != 0)) == 64

    def test_deterministic(self, unit_geom):
        a = synth_scene(unit_geom, "box", min_index=(1, 2, 3), max_index=(4, 5, 6), cls=3)
        b = synth_scene(unit_geom, "box", min_index=(1, 2, 3), max_index=(4, 5, 6), cls=3)
        assert a.content_hash() == b.content_hash()

    def test_out_of_bounds(self, unit_geom):
        with pytest.raises(ValueError):
            synth_scene(unit_geom, "single_voxel", index=(8, 0, 0), cls=1)
        with pytest.raises(ValueError):
            synth_scene(unit_geom, "box", min_index=(0, 0, 0), max_index=(9, 1, 1), cls=1)
        with pytest.raises(ValueError):
            synth_scene(unit_geom, "floor_plane", z_index=-1, cls=1)


def test_unflatten_roundtrip():
    g = GridGeometry((3, 4, 5), (0, 0, 0), 1.0, 2, 0)
    rng = np.random.default_rng(0)
    field = rng.normal(size=(3, 4, 5, 2))
    grid = OccupancyGrid(g, logits=field)
    assert np.array_equal(unflatten_field(g, grid.logits_flat()), np.asarray(grid.logits))
