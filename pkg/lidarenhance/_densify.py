"""Dense intensity masks: mesh neighboring returns and rasterize in camera space."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from lidarenhance._core import CameraModel, DenseIntensityMask, RangeImage, SensorConfig
from lidarenhance._errors import DataError, DimensionMismatchError
from lidarenhance._geometry import (
    PixelCoord,
    cell_directions,
    inside_image,
    nearest_pixel,
    project_points,
    wraps,
)

BARYCENTRIC_TOLERANCE = -1e-12
DEGENERATE_AREA = 1e-12
_BBOX_SLACK = 1e-9


@dataclass(frozen=True)
class DensifyOptions:
    """Knobs of the densification pass."""

    guard_px: float = 1.0
    max_depth_gap: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.guard_px) and self.guard_px >= 0.0):
            raise DataError("guard_px must be a non-negative number")
        if self.max_depth_gap is not None and not self.max_depth_gap > 0.0:
            raise DataError("max_depth_gap must be positive when set")


class MaskVertex(NamedTuple):
    pixel: PixelCoord
    intensity: float
    cell: tuple[int, int]


class Triangle(NamedTuple):
    a: MaskVertex
    b: MaskVertex
    c: MaskVertex


@dataclass(frozen=True, eq=False)
class VertexGrid:
    """Projected returns laid out on the range-image grid; ``present`` marks vertices."""

    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    intensity: np.ndarray
    present: np.ndarray

    @classmethod
    def from_vertices(cls, rows: int, cols: int, vertices: Sequence[MaskVertex]) -> VertexGrid:
        grid = {name: np.zeros((rows, cols)) for name in ("u", "v", "z", "intensity")}
        present = np.zeros((rows, cols), dtype=bool)
        for vertex in vertices:
            i, j = vertex.cell
            grid["u"][i, j], grid["v"][i, j], grid["z"][i, j] = vertex.pixel
            grid["intensity"][i, j] = vertex.intensity
            present[i, j] = True
        return cls(present=present, **grid)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.present.shape[0]), int(self.present.shape[1]))

    def __getitem__(self, cell: tuple[int, int]) -> MaskVertex | None:
        i, j = cell
        if not self.present[i, j]:
            return None
        pixel = PixelCoord(float(self.u[i, j]), float(self.v[i, j]), float(self.z[i, j]))
        return MaskVertex(pixel, float(self.intensity[i, j]), (int(i), int(j)))

    def count(self) -> int:
        return int(self.present.sum())


# ---------------------------------------------------------------------------
# Vertices and meshing
# ---------------------------------------------------------------------------


def collect_vertices(
    ri: RangeImage, cfg: SensorConfig, cam: CameraModel, guard_px: float = 1.0
) -> VertexGrid:
    """Project every return that lands on the image (plus *guard_px*) to a vertex."""
    if (ri.rows, ri.cols) != cfg.shape:
        raise DimensionMismatchError(
            f"range image is {ri.rows}x{ri.cols}, sensor is {cfg.rows}x{cfg.cols}"
        )
    xyz = (cell_directions(cfg) * ri.depth[..., None]).reshape(-1, 3)
    u, v, z, in_front = project_points(xyz, cam)
    present = ri.returns.ravel() & in_front & inside_image(u, v, cam, guard_px)
    shape = cfg.shape
    return VertexGrid(
        u=np.where(present, u, 0.0).reshape(shape),
        v=np.where(present, v, 0.0).reshape(shape),
        z=np.where(present, z, 0.0).reshape(shape),
        intensity=np.where(present, ri.intensity.ravel(), 0.0).reshape(shape),
        present=present.reshape(shape),
    )


def _mesh_indices(
    present: np.ndarray, wrap: bool, z: np.ndarray | None = None, max_depth_gap: float | None = None
) -> np.ndarray:
    """(n, 3) flat cell indices of triangles, in window order."""
    rows, cols = present.shape
    if rows < 2 or cols < 2:
        return np.zeros((0, 3), dtype=np.int64)
    j = np.arange(cols if wrap else cols - 1)
    i = np.arange(rows - 1)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    jj1 = (jj + 1) % cols
    a = (ii * cols + jj).ravel()
    b = (ii * cols + jj1).ravel()
    c = ((ii + 1) * cols + jj).ravel()
    d = ((ii + 1) * cols + jj1).ravel()

    flat = present.ravel()
    pa, pb, pc, pd = flat[a], flat[b], flat[c], flat[d]
    count = pa.astype(int) + pb + pc + pd

    abc = np.stack([a, b, c], axis=1)
    cbd = np.stack([c, b, d], axis=1)
    acd = np.stack([a, c, d], axis=1)
    abd = np.stack([a, b, d], axis=1)
    # With four vertices the first triangle is (A, B, C); with three it is the
    # triangle made of whichever three are present.
    first = np.select(
        [~pd[:, None], ~pa[:, None], ~pb[:, None], ~pc[:, None]],
        [abc, cbd, acd, abd],
        default=abc,
    )
    candidates = np.stack([first, cbd], axis=1)
    keep = np.stack([count >= 3, count == 4], axis=1)
    triangles = candidates[keep]

    if max_depth_gap is not None and z is not None and len(triangles):
        tz = z.ravel()[triangles]
        triangles = triangles[(tz.max(axis=1) - tz.min(axis=1)) <= max_depth_gap]
    return triangles


def mesh_cells(
    vertices: VertexGrid, wrap: bool, max_depth_gap: float | None = None
) -> list[Triangle]:
    """Triangulate every 2x2 window of the vertex grid holding three or four vertices."""
    triangles = _mesh_indices(vertices.present, wrap, vertices.z, max_depth_gap)
    cols = vertices.shape[1]
    out = []
    for tri in triangles:
        corners = [vertices[divmod(int(idx), cols)] for idx in tri]
        out.append(Triangle(*corners))
    return out


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------


def _rasterize_arrays(
    xy: np.ndarray, z: np.ndarray, values: np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffered barycentric fill; xy is (n, 3, 2), z and values are (n, 3).

    Ties in depth keep the smaller value, so the result does not depend on the
    order of the triangles.
    """
    best_z = np.full((height, width), np.inf)
    best_value = np.zeros((height, width))

    for k in range(len(xy)):
        (x0, y0), (x1, y1), (x2, y2) = xy[k]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < DEGENERATE_AREA:
            continue
        col_lo = max(0, math.ceil(min(x0, x1, x2) - _BBOX_SLACK))
        col_hi = min(width - 1, math.floor(max(x0, x1, x2) + _BBOX_SLACK))
        row_lo = max(0, math.ceil(min(y0, y1, y2) - _BBOX_SLACK))
        row_hi = min(height - 1, math.floor(max(y0, y1, y2) + _BBOX_SLACK))
        if col_lo > col_hi or row_lo > row_hi:
            continue

        py, px = np.mgrid[row_lo : row_hi + 1, col_lo : col_hi + 1].astype(np.float64)
        l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / area
        l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / area
        l0 = 1.0 - l1 - l2
        inside = (
            (l0 >= BARYCENTRIC_TOLERANCE)
            & (l1 >= BARYCENTRIC_TOLERANCE)
            & (l2 >= BARYCENTRIC_TOLERANCE)
        )
        if not inside.any():
            continue

        z0, z1, z2 = z[k]
        v0, v1, v2 = values[k]
        depth = l0 * z0 + l1 * z1 + l2 * z2
        value = np.clip(l0 * v0 + l1 * v1 + l2 * v2, min(v0, v1, v2), max(v0, v1, v2))

        window = (slice(row_lo, row_hi + 1), slice(col_lo, col_hi + 1))
        current_z = best_z[window]
        current_value = best_value[window]
        wins = inside & (
            (depth < current_z) | ((depth == current_z) & (value < current_value))
        )
        current_z[wins] = depth[wins]
        current_value[wins] = value[wins]

    covered = np.isfinite(best_z)
    return np.where(covered, best_value, 0.0), np.where(covered, best_z, 0.0)


def rasterize(triangles: Sequence[Triangle], width: int, height: int) -> DenseIntensityMask:
    """Fill *triangles* into a width x height mask with interpolated intensity."""
    if not triangles:
        return DenseIntensityMask.empty(height, width)
    xy = np.array([[(vx.pixel.u, vx.pixel.v) for vx in tri] for tri in triangles])
    z = np.array([[vx.pixel.z for vx in tri] for tri in triangles])
    values = np.array([[vx.intensity for vx in tri] for tri in triangles])
    mask, depth = _rasterize_arrays(xy, z, values, width, height)
    return DenseIntensityMask(mask, depth)


def build_dense_mask(
    ri: RangeImage,
    cfg: SensorConfig,
    cam: CameraModel,
    options: DensifyOptions | None = None,
) -> DenseIntensityMask:
    """Collect vertices, mesh them and rasterize into a camera-sized mask."""
    options = options or DensifyOptions()
    vertices = collect_vertices(ri, cfg, cam, options.guard_px)
    triangles = _mesh_indices(vertices.present, wraps(cfg), vertices.z, options.max_depth_gap)
    if len(triangles) == 0:
        return DenseIntensityMask.empty(cam.height, cam.width)
    xy = np.stack([vertices.u.ravel()[triangles], vertices.v.ravel()[triangles]], axis=-1)
    mask, depth = _rasterize_arrays(
        xy,
        vertices.z.ravel()[triangles],
        vertices.intensity.ravel()[triangles],
        cam.width,
        cam.height,
    )
    return DenseIntensityMask(mask, depth)


def project_sparse(ri: RangeImage, cfg: SensorConfig, cam: CameraModel) -> DenseIntensityMask:
    """Write every projected return to its nearest pixel (no meshing), z-buffered."""
    vertices = collect_vertices(ri, cfg, cam, guard_px=0.5)
    present = vertices.present.ravel()
    u = vertices.u.ravel()[present]
    v = vertices.v.ravel()[present]
    z = vertices.z.ravel()[present]
    values = vertices.intensity.ravel()[present]
    mask = np.zeros(cam.shape)
    depth = np.zeros(cam.shape)
    if len(z) == 0:
        return DenseIntensityMask(mask, depth)
    row, col = nearest_pixel(u, v, cam)
    pixel = row * cam.width + col
    order = np.lexsort((values, z, pixel))
    pixel, z, values = pixel[order], z[order], values[order]
    winners, first = np.unique(pixel, return_index=True)
    mask.ravel()[winners] = values[first]
    depth.ravel()[winners] = z[first]
    return DenseIntensityMask(mask, depth)
