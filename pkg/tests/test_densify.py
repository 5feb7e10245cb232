"""Tests for vertex collection, meshing and z-buffered rasterization."""

import math

import numpy as np
import pytest

from lidarenhance import (
    CameraModel,
    DataError,
    DensifyOptions,
    MaskVertex,
    PixelCoord,
    RangeImage,
    SensorConfig,
    Triangle,
    VertexGrid,
    build_dense_mask,
    collect_vertices,
    mesh_cells,
    project_sparse,
    rasterize,
)
from lidarenhance._densify import _mesh_indices, _rasterize_arrays
from tests.helpers import brute_force_raster, constant_range_image, random_triangles, small_sensor


def _vertex(u, v, z=5.0, intensity=0.5, cell=(0, 0)):
    return MaskVertex(PixelCoord(u, v, z), intensity, cell)


def _grid(present, z=None):
    """VertexGrid over *present* with vertices at their cell position scaled by 4 px."""
    rows, cols = len(present), len(present[0])
    vertices = []
    for i in range(rows):
        for j in range(cols):
            if present[i][j]:
                depth = 5.0 if z is None else z[i][j]
                vertices.append(_vertex(4.0 * j, 4.0 * i, depth, 0.5, (i, j)))
    return VertexGrid.from_vertices(rows, cols, vertices)


def _axis_sensor():
    """3x3 grid whose center cell looks straight down the sensor x axis."""
    return SensorConfig(
        rows=3,
        cols=3,
        elev_min=math.radians(-15.0),
        elev_max=math.radians(15.0),
        az_min=math.radians(-30.0),
        az_max=math.radians(30.0),
        max_range=50.0,
    )


def _wall():
    """8x16 forward sensor looking at a constant-depth shell through a 32x16 camera."""
    cfg = small_sensor(rows=8, cols=16, full_turn=False)
    cam = CameraModel(width=32, height=16, fx=24.0, fy=24.0)
    return cfg, cam, constant_range_image(8, 16, depth=5.0, intensity=0.5)


def _triangle_arrays(vertices, triangles):
    xy = np.stack([vertices.u.ravel()[triangles], vertices.v.ravel()[triangles]], axis=-1)
    return xy, vertices.z.ravel()[triangles], vertices.intensity.ravel()[triangles]


def _inside(px, py, corners, tolerance=1e-9):
    (x0, y0), (x1, y1), (x2, y2) = corners
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / area
    l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / area
    return min(1.0 - l1 - l2, l1, l2) >= -tolerance


class TestCollectVertices:
    def test_all_zero_image_has_no_vertices(self):
        cfg, cam, _ = _wall()
        assert collect_vertices(RangeImage.empty(8, 16), cfg, cam).count() == 0

    def test_return_on_optical_axis(self):
        """A return straight ahead becomes a vertex at the principal point."""
        cfg = _axis_sensor()
        cam = CameraModel(width=9, height=5, fx=8.0, fy=8.0)
        depth = np.zeros((3, 3))
        depth[1, 1] = 5.0
        vertices = collect_vertices(RangeImage(depth, np.zeros((3, 3))), cfg, cam)
        assert vertices.count() == 1
        vertex = vertices[1, 1]
        assert vertex.pixel.u == pytest.approx(cam.cx)
        assert vertex.pixel.v == pytest.approx(cam.cy)
        assert vertex.pixel.z == pytest.approx(5.0)
        assert vertex.cell == (1, 1)

    def test_return_behind_camera_is_absent(self):
        cfg = small_sensor(rows=4, cols=8)
        depth = np.zeros((4, 8))
        depth[1, 0] = 5.0
        vertices = collect_vertices(RangeImage(depth, np.zeros((4, 8))), cfg, CameraModel())
        assert vertices.count() == 0
        assert vertices[1, 0] is None

    def test_returns_far_outside_the_image_are_absent(self):
        cfg, cam, ri = _wall()
        vertices = collect_vertices(ri, cfg, cam)
        assert 0 < vertices.count() < 8 * 16
        assert not vertices.present[:, 0].any()

    def test_rejects_mismatched_image(self):
        cfg, cam, _ = _wall()
        with pytest.raises(DataError):
            collect_vertices(RangeImage.empty(4, 4), cfg, cam)


class TestMeshCells:
    def test_four_vertices_make_two_triangles(self):
        assert len(mesh_cells(_grid([[1, 1], [1, 1]]), wrap=False)) == 2

    def test_three_vertices_make_one_triangle(self):
        triangles = mesh_cells(_grid([[1, 1], [1, 0]]), wrap=False)
        assert len(triangles) == 1
        assert {vx.cell for vx in triangles[0]} == {(0, 0), (0, 1), (1, 0)}

    def test_two_vertices_leave_a_hole(self):
        assert mesh_cells(_grid([[1, 0], [0, 1]]), wrap=False) == []

    def test_fixed_diagonal_split(self):
        a, b, c, d = (0, 0), (0, 1), (1, 0), (1, 1)
        first, second = mesh_cells(_grid([[1, 1], [1, 1]]), wrap=False)
        assert [vx.cell for vx in first] == [a, b, c]
        assert [vx.cell for vx in second] == [c, b, d]

    def test_wrap_closes_the_ring(self):
        grid = _grid([[1, 1, 1], [1, 1, 1]])
        assert len(mesh_cells(grid, wrap=False)) == 4
        assert len(mesh_cells(grid, wrap=True)) == 6

    def test_single_row_has_no_windows(self):
        assert mesh_cells(_grid([[1, 1, 1]]), wrap=True) == []

    def test_depth_gap_filter(self):
        grid = _grid([[1, 1], [1, 1]], z=[[5.0, 5.0], [5.0, 20.0]])
        assert len(mesh_cells(grid, wrap=False)) == 2
        kept = mesh_cells(grid, wrap=False, max_depth_gap=1.0)
        assert len(kept) == 1
        assert {vx.cell for vx in kept[0]} == {(0, 0), (0, 1), (1, 0)}


class TestRasterize:
    CORNERS = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)]

    def test_empty_list_gives_zero_mask(self):
        mask = rasterize([], 6, 4)
        assert mask.shape == (4, 6)
        assert not mask.values.any()

    def test_constant_triangle(self):
        """A right triangle with legs of 4 px covers 15 pixel centers at 0.6."""
        tri = Triangle(
            _vertex(0.0, 0.0, intensity=0.6),
            _vertex(4.0, 0.0, intensity=0.6),
            _vertex(0.0, 4.0, intensity=0.6),
        )
        mask = rasterize([tri], 8, 8)
        assert int(mask.covered.sum()) == 15
        assert set(np.unique(mask.values[mask.covered])) == {0.6}
        assert mask.covered[0, 4] and mask.covered[2, 2] and not mask.covered[3, 2]

    def test_nearer_triangle_wins(self):
        near = Triangle(*(_vertex(u, v, z=2.0, intensity=0.9) for u, v in self.CORNERS))
        far = Triangle(*(_vertex(u, v, z=8.0, intensity=0.1) for u, v in self.CORNERS))
        for order in ([near, far], [far, near]):
            mask = rasterize(order, 8, 8)
            assert mask.values[1, 1] == 0.9
            assert mask.depth[1, 1] == pytest.approx(2.0)

    def test_interpolated_value_stays_within_vertex_range(self):
        tri = Triangle(
            _vertex(0.0, 0.0, intensity=0.2),
            _vertex(7.0, 1.0, intensity=0.3),
            _vertex(2.0, 7.0, intensity=0.9),
        )
        mask = rasterize([tri], 8, 8)
        covered = mask.values[mask.covered]
        assert covered.size > 0
        assert covered.min() >= 0.2 and covered.max() <= 0.9

    def test_degenerate_triangle_covers_nothing(self):
        tri = Triangle(_vertex(0.0, 0.0), _vertex(2.0, 2.0), _vertex(4.0, 4.0))
        assert not rasterize([tri], 6, 6).covered.any()

    def test_matches_brute_force_oracle(self):
        """Coverage, z-winner and value agree with a per-pixel oracle on 200 random sets."""
        rng = np.random.default_rng(2024)
        for trial in range(200):
            if trial == 0:
                width, height, count = 64, 64, 20
            else:
                width, height = (int(n) for n in rng.integers(4, 65, size=2))
                count = int(rng.integers(1, 21))
            xy, z, values = random_triangles(rng, count, width, height)
            mask, depth = _rasterize_arrays(xy, z, values, width, height)
            expected_mask, expected_depth = brute_force_raster(xy, z, values, width, height)
            np.testing.assert_array_equal(depth > 0.0, expected_depth > 0.0)
            np.testing.assert_allclose(depth, expected_depth, rtol=0.0, atol=1e-9)
            np.testing.assert_allclose(mask, expected_mask, rtol=0.0, atol=1e-9)

    def test_triangle_order_does_not_matter(self):
        rng = np.random.default_rng(8)
        xy, z, values = random_triangles(rng, 20, 24, 16)
        z[:, :] = 10.0  # equal depths exercise the value tie-break
        baseline = _rasterize_arrays(xy, z, values, 24, 16)
        for _ in range(5):
            order = rng.permutation(20)
            shuffled = _rasterize_arrays(xy[order], z[order], values[order], 24, 16)
            np.testing.assert_array_equal(shuffled[0], baseline[0])
            np.testing.assert_array_equal(shuffled[1], baseline[1])


class TestBuildDenseMask:
    def test_all_zero_image_gives_zero_mask(self):
        cfg, cam, _ = _wall()
        mask = build_dense_mask(RangeImage.empty(8, 16), cfg, cam)
        assert mask.shape == cam.shape
        assert not mask.values.any()

    def test_wall_fills_a_region_at_constant_intensity(self):
        cfg, cam, ri = _wall()
        mask = build_dense_mask(ri, cfg, cam)
        assert mask.shape == (16, 32)
        assert mask.covered.sum() > 0.6 * mask.values.size
        assert set(np.unique(mask.values[mask.covered])) == {0.5}
        assert not mask.values[~mask.covered].any()

    def test_wall_matches_brute_force_oracle(self):
        cfg, cam, ri = _wall()
        vertices = collect_vertices(ri, cfg, cam)
        triangles = _mesh_indices(vertices.present, wrap=False)
        expected, expected_depth = brute_force_raster(
            *_triangle_arrays(vertices, triangles), cam.width, cam.height
        )
        mask = build_dense_mask(ri, cfg, cam)
        np.testing.assert_array_equal(mask.covered, expected_depth > 0.0)
        np.testing.assert_allclose(mask.values, expected, rtol=0.0, atol=1e-9)

    def test_missing_return_punches_a_local_hole(self):
        """Deleting any interior return only clears pixels of its incident triangles."""
        cfg, cam, ri = _wall()
        vertices = collect_vertices(ri, cfg, cam)
        triangles = _mesh_indices(vertices.present, wrap=False)
        xy = _triangle_arrays(vertices, triangles)[0]
        baseline = build_dense_mask(ri, cfg, cam)

        present = vertices.present
        rows, cols = present.shape
        interior = [
            (i, j)
            for i in range(1, rows - 1)
            for j in range(1, cols - 1)
            if present[i - 1 : i + 2, j - 1 : j + 2].all()
        ]
        assert len(interior) >= 40
        for cell in interior:
            depth = ri.depth.copy()
            depth[cell] = 0.0
            holed = build_dense_mask(RangeImage(depth, ri.intensity), cfg, cam)

            flat = cell[0] * cols + cell[1]
            incident = xy[(triangles == flat).any(axis=1)]
            assert len(incident) == 6
            changed = np.argwhere(holed.values != baseline.values)
            assert len(changed) > 0
            for row, col in changed:
                assert any(_inside(float(col), float(row), tri) for tri in incident)

            hole_row = int(math.floor(vertices.v[cell] + 0.5))
            hole_col = int(math.floor(vertices.u[cell] + 0.5))
            assert not holed.covered[hole_row, hole_col]
            assert baseline.covered[hole_row, hole_col]

    def test_removing_returns_never_adds_coverage(self):
        cfg, cam, ri = _wall()
        baseline = build_dense_mask(ri, cfg, cam).covered
        rng = np.random.default_rng(4)
        for _ in range(10):
            depth = np.where(rng.random((8, 16)) < 0.2, 0.0, ri.depth)
            intensity = np.where(depth > 0.0, ri.intensity, 0.0)
            covered = build_dense_mask(RangeImage(depth, intensity), cfg, cam).covered
            assert not (covered & ~baseline).any()

    def test_depth_gap_option_drops_discontinuities(self):
        cfg, cam, ri = _wall()
        depth = ri.depth.copy()
        depth[:, 8:] = 15.0
        stepped = RangeImage(depth, ri.intensity)
        full = build_dense_mask(stepped, cfg, cam)
        gapped = build_dense_mask(stepped, cfg, cam, DensifyOptions(max_depth_gap=2.0))
        assert gapped.covered.sum() < full.covered.sum()
        assert not (gapped.covered & ~full.covered).any()

    def test_options_reject_negative_guard(self):
        with pytest.raises(DataError):
            DensifyOptions(guard_px=-1.0)


class TestProjectSparse:
    def test_single_return_lands_on_nearest_pixel(self):
        cfg = _axis_sensor()
        cam = CameraModel(width=9, height=5, fx=8.0, fy=8.0)
        depth = np.zeros((3, 3))
        intensity = np.zeros((3, 3))
        depth[1, 1], intensity[1, 1] = 5.0, 0.4
        mask = project_sparse(RangeImage(depth, intensity), cfg, cam)
        assert int(mask.valid.sum()) == 1
        assert mask.values[2, 4] == 0.4
        assert mask.depth[2, 4] == pytest.approx(5.0)

    def test_sparse_covers_less_than_dense(self):
        cfg, cam, ri = _wall()
        sparse = project_sparse(ri, cfg, cam)
        dense = build_dense_mask(ri, cfg, cam)
        assert 0 < sparse.covered.sum() < dense.covered.sum()
