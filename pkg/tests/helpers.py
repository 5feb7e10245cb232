"""Shared test helpers: desk-scale fixtures, oracles and CLI namespace builders."""

import argparse
import math

import numpy as np

from lidarenhance import (
    DEFAULT_PALETTE,
    Box,
    CameraModel,
    Material,
    RangeImage,
    Scene,
    SensorConfig,
    sensor_preset,
)
from lidarenhance._densify import BARYCENTRIC_TOLERANCE, DEGENERATE_AREA

DESK_CONFIG = """\
[sensor]
preset = "desk32"

[camera]
width = 128
height = 64
fx = 96.0
fy = 96.0

[scene]
origin = 0.0, 0.0, 2.0
boxes_min = 2
boxes_max = 5
"""


def desk_sensor() -> SensorConfig:
    return sensor_preset("desk32")


def desk_camera(**kwargs) -> CameraModel:
    defaults = {"width": 128, "height": 64, "fx": 96.0, "fy": 96.0}
    defaults.update(kwargs)
    return CameraModel(**defaults)


def small_sensor(rows=4, cols=8, full_turn=True, max_range=100.0) -> SensorConfig:
    """A tiny grid for hand-checked geometry."""
    if full_turn:
        az_min, az_max = -math.pi, math.pi
    else:
        az_min, az_max = math.radians(-40.0), math.radians(40.0)
    return SensorConfig(
        rows=rows,
        cols=cols,
        elev_min=math.radians(-20.0),
        elev_max=math.radians(20.0),
        az_min=az_min,
        az_max=az_max,
        max_range=max_range,
    )


WALL = Material("wall", (0.8, 0.8, 0.8), rho=0.5)
WINDOW = Material("window", (0.5, 0.7, 0.9), rho=0.0, transparent=True)


def wall_scene(distance=5.0, window=None, material=WALL):
    """A wall facing the sensor at x = *distance*, no ground.

    *window* is ``(y_lo, y_hi, z_lo, z_hi)`` of a transparent pane set just in
    front of the wall.
    """
    materials = (material, WINDOW)
    boxes = [Box((distance, -100.0, -100.0), (distance + 0.5, 100.0, 100.0), material.name)]
    if window is not None:
        y_lo, y_hi, z_lo, z_hi = window
        boxes.append(
            Box((distance - 0.01, y_lo, z_lo), (distance + 0.25, y_hi, z_hi), WINDOW.name)
        )
    return Scene(materials=materials, ground=None, boxes=tuple(boxes))


def plain_scene(boxes=()):
    return Scene(materials=DEFAULT_PALETTE, ground="asphalt", boxes=tuple(boxes))


def constant_range_image(rows, cols, depth=5.0, intensity=0.5) -> RangeImage:
    return RangeImage(np.full((rows, cols), depth), np.full((rows, cols), intensity))


# ---------------------------------------------------------------------------
# Rasterization oracle
# ---------------------------------------------------------------------------


def random_triangles(rng, count, width, height):
    """(count, 3, 2) pixel positions, (count, 3) depths and (count, 3) values."""
    xy = np.stack(
        [
            rng.uniform(-4.0, width + 3.0, size=(count, 3)),
            rng.uniform(-4.0, height + 3.0, size=(count, 3)),
        ],
        axis=-1,
    )
    z = rng.uniform(1.0, 50.0, size=(count, 3))
    values = rng.uniform(0.0, 1.0, size=(count, 3))
    return xy, z, values


def brute_force_raster(xy, z, values, width, height):
    """Barycentric test of every pixel center against every triangle, in triangle order.

    Smaller depth wins; equal depths keep the smaller value.
    """
    py, px = np.mgrid[0:height, 0:width].astype(np.float64)
    best_z = np.full((height, width), np.inf)
    best_value = np.zeros((height, width))
    for k in range(len(xy)):
        (x0, y0), (x1, y1), (x2, y2) = (tuple(map(float, p)) for p in xy[k])
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < DEGENERATE_AREA:
            continue
        l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / area
        l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / area
        l0 = 1.0 - l1 - l2
        inside = np.minimum(np.minimum(l0, l1), l2) >= BARYCENTRIC_TOLERANCE
        z0, z1, z2 = map(float, z[k])
        v0, v1, v2 = map(float, values[k])
        depth = l0 * z0 + l1 * z1 + l2 * z2
        value = np.clip(l0 * v0 + l1 * v1 + l2 * v2, min(v0, v1, v2), max(v0, v1, v2))
        wins = inside & ((depth < best_z) | ((depth == best_z) & (value < best_value)))
        best_z = np.where(wins, depth, best_z)
        best_value = np.where(wins, value, best_value)
    covered = np.isfinite(best_z)
    return np.where(covered, best_value, 0.0), np.where(covered, best_z, 0.0)


# ---------------------------------------------------------------------------
# CLI namespaces
# ---------------------------------------------------------------------------


def make_raycast_args(**kwargs):
    defaults = {
        "config": None,
        "scene": None,
        "seed": 0,
        "out_image": None,
        "out_range": None,
        "clean_out": None,
        "preview": None,
    }
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_densify_args(**kwargs):
    defaults = {
        "config": None,
        "range": None,
        "out": None,
        "depth_out": None,
        "sparse": False,
        "guard_px": None,
    }
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_train_args(**kwargs):
    defaults = {
        "config": None,
        "data": None,
        "out": None,
        "epochs": None,
        "lr": None,
        "batch_size": None,
        "channels": None,
        "blocks": None,
        "seed": None,
    }
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_enhance_args(**kwargs):
    defaults = {
        "config": None,
        "cloud": None,
        "prediction": None,
        "out": None,
        "range_out": None,
        "noise_p": None,
        "seed": None,
        "threshold": None,
        "mode": None,
        "out_of_frustum": None,
    }
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_eval_args(**kwargs):
    defaults = {"prediction": None, "truth": None, "threshold": 0.5}
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_viz_args(**kwargs):
    defaults = {"tensor": None, "out": None, "channel": None, "normalize": False}
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)


def make_gen_args(**kwargs):
    defaults = {"config": None, "out": None, "count": 1, "seed": 0}
    defaults.update(kwargs)
    return argparse.Namespace(**defaults)
