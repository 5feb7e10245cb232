"""Spherical/Cartesian conversion, range-image binning and pinhole projection."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from lidarenhance._core import CameraModel, PointCloud, RangeImage, SensorConfig
from lidarenhance._errors import DimensionMismatchError, OutOfBoundsError

MIN_CAMERA_DEPTH = 1e-6
TWO_PI = 2.0 * math.pi


class PixelCoord(NamedTuple):
    """Continuous pixel position (u along width, v along height) and camera depth."""

    u: float
    v: float
    z: float


def wraps(cfg: SensorConfig) -> bool:
    """True when the azimuth span is a full turn, so column 0 neighbors the last."""
    return abs((cfg.az_max - cfg.az_min) - TWO_PI) <= 1e-12


def bin_center_angles(cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return (elevation per row, azimuth per column) at bin centers."""
    rows = np.arange(cfg.rows, dtype=np.float64)
    cols = np.arange(cfg.cols, dtype=np.float64)
    elevation = cfg.elev_max - (rows + 0.5) * cfg.d_elev
    azimuth = cfg.az_min + (cols + 0.5) * cfg.d_az
    return elevation, azimuth


def spherical_to_unit(elevation: np.ndarray, azimuth: np.ndarray) -> np.ndarray:
    """Unit vectors for broadcastable elevation/azimuth arrays, last axis xyz."""
    cos_el = np.cos(elevation)
    return np.stack(
        np.broadcast_arrays(
            cos_el * np.cos(azimuth), cos_el * np.sin(azimuth), np.sin(elevation)
        ),
        axis=-1,
    )


def cell_directions(cfg: SensorConfig) -> np.ndarray:
    """(rows, cols, 3) unit vectors pointing through every bin center."""
    elevation, azimuth = bin_center_angles(cfg)
    return spherical_to_unit(elevation[:, None], azimuth[None, :])


def _bin_indices(
    xyz: np.ndarray, cfg: SensorConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (row, col, distance, in_grid) for each sensor-frame point."""
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    distance = np.sqrt(x * x + y * y + z * z)
    azimuth = np.arctan2(y, x)
    elevation = np.arctan2(z, np.hypot(x, y))
    if wraps(cfg):
        azimuth = cfg.az_min + np.mod(azimuth - cfg.az_min, TWO_PI)
    row = np.floor((cfg.elev_max - elevation) / cfg.d_elev).astype(np.int64)
    col = np.floor((azimuth - cfg.az_min) / cfg.d_az).astype(np.int64)
    if wraps(cfg):
        # np.mod can round up to exactly 2*pi.
        col = np.where(col == cfg.cols, 0, col)
    in_grid = (
        (distance > 0.0)
        & (distance <= cfg.max_range)
        & (row >= 0)
        & (row < cfg.rows)
        & (col >= 0)
        & (col < cfg.cols)
    )
    return row, col, distance, in_grid


def pointcloud_to_range_image(pc: PointCloud, cfg: SensorConfig) -> RangeImage:
    """Bin *pc* into a range image; the nearest point wins each cell."""
    depth = np.zeros(cfg.shape)
    intensity = np.zeros(cfg.shape)
    if len(pc) == 0:
        return RangeImage(depth, intensity)

    row, col, distance, in_grid = _bin_indices(pc.xyz, cfg)
    cell = (row * cfg.cols + col)[in_grid]
    distance = distance[in_grid]
    values = pc.intensity[in_grid]

    # Sort by cell, then distance, then intensity: the first entry of each cell
    # is the winner regardless of the input order.
    order = np.lexsort((values, distance, cell))
    cell, distance, values = cell[order], distance[order], values[order]
    winners, first = np.unique(cell, return_index=True)
    depth.ravel()[winners] = distance[first]
    intensity.ravel()[winners] = values[first]
    return RangeImage(depth, intensity)


def range_image_to_pointcloud(ri: RangeImage, cfg: SensorConfig) -> PointCloud:
    """Emit one bin-center point per returning cell, in row-major cell order."""
    if (ri.rows, ri.cols) != cfg.shape:
        raise DimensionMismatchError(
            f"range image is {ri.rows}x{ri.cols}, sensor {cfg.name} is "
            f"{cfg.rows}x{cfg.cols}"
        )
    rows, cols = np.nonzero(ri.returns)
    elevation, azimuth = bin_center_angles(cfg)
    directions = spherical_to_unit(elevation[rows], azimuth[cols]).reshape(-1, 3)
    xyz = directions * ri.depth[rows, cols][:, None]
    return PointCloud.from_arrays(xyz, ri.intensity[rows, cols])


# ---------------------------------------------------------------------------
# Camera projection
# ---------------------------------------------------------------------------


def project_points(
    xyz: np.ndarray, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Project (N, 3) sensor-frame points; returns (u, v, z, in_front).

    Entries behind the camera have ``in_front`` False and NaN pixel coordinates.
    """
    pts = cam.extrinsic.apply(np.asarray(xyz, dtype=np.float64).reshape(-1, 3))
    z = pts[:, 2]
    in_front = z > MIN_CAMERA_DEPTH
    safe_z = np.where(in_front, z, 1.0)
    u = np.where(in_front, cam.fx * pts[:, 0] / safe_z + cam.cx, np.nan)
    v = np.where(in_front, cam.fy * pts[:, 1] / safe_z + cam.cy, np.nan)
    return u, v, z, in_front


def project_to_camera(point: tuple[float, float, float], cam: CameraModel) -> PixelCoord | None:
    """Project one sensor-frame point; None when it is not in front of the camera."""
    u, v, z, in_front = project_points(np.array([point], dtype=np.float64), cam)
    if not in_front[0]:
        return None
    return PixelCoord(float(u[0]), float(v[0]), float(z[0]))


def inside_image(u: np.ndarray, v: np.ndarray, cam: CameraModel, margin: float = 0.0) -> np.ndarray:
    """Pixel positions within [-margin, size - 1 + margin] on both axes."""
    with np.errstate(invalid="ignore"):
        return (
            (u >= -margin)
            & (u <= cam.width - 1 + margin)
            & (v >= -margin)
            & (v <= cam.height - 1 + margin)
        )


def camera_rays(cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Return (camera center, (H, W, 3) unit ray directions) in the sensor frame."""
    v, u = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    local = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1)
    local /= np.linalg.norm(local, axis=-1, keepdims=True)
    directions = local @ cam.extrinsic.rotation
    return cam.extrinsic.camera_center(), directions


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _corner_weights(
    coord: np.ndarray, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower index, upper index and fractional offset along one axis."""
    if size == 1:
        zeros = np.zeros(coord.shape, dtype=np.int64)
        return zeros, zeros, np.zeros(coord.shape)
    lower = np.minimum(np.floor(coord).astype(np.int64), size - 2)
    return lower, lower + 1, coord - lower


def sample_bilinear_many(grid: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear samples of *grid* at continuous pixel positions."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise DimensionMismatchError("bilinear sampling needs a 2-D grid")
    height, width = grid.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    if not np.all(inside):
        raise OutOfBoundsError(
            f"sample position outside [0, {width - 1}] x [0, {height - 1}]"
        )
    u0, u1, fu = _corner_weights(u, width)
    v0, v1, fv = _corner_weights(v, height)
    top = (1.0 - fu) * grid[v0, u0] + fu * grid[v0, u1]
    bottom = (1.0 - fu) * grid[v1, u0] + fu * grid[v1, u1]
    return (1.0 - fv) * top + fv * bottom


def sample_bilinear(grid: np.ndarray, u: float, v: float) -> float:
    """Bilinear sample of *grid* at one continuous pixel position."""
    return float(sample_bilinear_many(grid, np.array([u]), np.array([v]))[0])


def nearest_pixel(u: np.ndarray, v: np.ndarray, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Integer pixel indices closest to (u, v), clipped to the image."""
    col = np.clip(np.floor(u + 0.5).astype(np.int64), 0, cam.width - 1)
    row = np.clip(np.floor(v + 0.5).astype(np.int64), 0, cam.height - 1)
    return row, col
