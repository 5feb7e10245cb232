"""Shared value types: sensor setup, range images, clouds, camera, masks."""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from lidarenhance._errors import DataError, DimensionMismatchError, UnknownPresetError

ORTHONORMAL_TOLERANCE = 1e-9


def _readonly(values: object, name: str, ndim: int) -> np.ndarray:
    """Copy *values* into a read-only float64 array with *ndim* dimensions."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatchError(
            f"{name} must have {ndim} dimensions, got shape {arr.shape}"
        )
    arr.setflags(write=False)
    return arr


def _check_unit_range(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError(f"{name} values must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Sensor configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorConfig:
    """Angular grid of a spinning LiDAR. Row 0 is the top (``elev_max``) row."""

    rows: int
    cols: int
    elev_min: float
    elev_max: float
    az_min: float
    az_max: float
    max_range: float
    name: str = "custom"

    def __post_init__(self) -> None:
        if int(self.rows) != self.rows or self.rows < 1:
            raise DataError(f"rows must be a positive integer, got {self.rows}")
        if int(self.cols) != self.cols or self.cols < 1:
            raise DataError(f"cols must be a positive integer, got {self.cols}")
        if not self.elev_min < self.elev_max:
            raise DataError("elev_min must be smaller than elev_max")
        if not self.az_min < self.az_max:
            raise DataError("az_min must be smaller than az_max")
        if self.az_max - self.az_min > 2.0 * math.pi + 1e-12:
            raise DataError("azimuth span must not exceed 2*pi")
        if not (math.isfinite(self.max_range) and self.max_range > 0.0):
            raise DataError(f"max_range must be positive, got {self.max_range}")
        if not self.name:
            raise DataError("sensor name must not be empty")

    @property
    def d_elev(self) -> float:
        return (self.elev_max - self.elev_min) / self.rows

    @property
    def d_az(self) -> float:
        return (self.az_max - self.az_min) / self.cols

    @property
    def vfov_deg(self) -> float:
        return math.degrees(self.elev_max - self.elev_min)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class SensorPreset:
    """A named sensor configuration plus the dataset facts it was taken from."""

    config: SensorConfig
    lidar_type: str
    train_size: int
    test_size: int


def _centered_preset(
    name: str, rows: int, cols: int, vfov_deg: float, max_range: float
) -> SensorConfig:
    half = math.radians(vfov_deg) / 2.0
    return SensorConfig(
        rows=rows,
        cols=cols,
        elev_min=-half,
        elev_max=half,
        az_min=-math.pi,
        az_max=math.pi,
        max_range=max_range,
        name=name,
    )


# Elevation spans are centered on the horizon; only the total VFoV is known.
PRESETS: dict[str, SensorPreset] = {
    "waymo64": SensorPreset(
        config=_centered_preset("waymo64", 64, 2650, 50.0, 75.0),
        lidar_type="Proprietary",
        train_size=158081,
        test_size=39987,
    ),
    "kitti64": SensorPreset(
        config=_centered_preset("kitti64", 64, 2048, 27.0, 80.0),
        lidar_type="Velodyne HDL-64E",
        train_size=20409,
        test_size=2702,
    ),
    # Small forward-facing sensor for oracle datasets; no real-world split.
    "desk32": SensorPreset(
        config=SensorConfig(
            rows=32,
            cols=64,
            elev_min=math.radians(-25.0),
            elev_max=math.radians(25.0),
            az_min=math.radians(-40.0),
            az_max=math.radians(40.0),
            max_range=40.0,
            name="desk32",
        ),
        lidar_type="synthetic",
        train_size=0,
        test_size=0,
    ),
}


def sensor_preset(name: str) -> SensorConfig:
    """Return the sensor configuration registered under *name*."""
    preset = PRESETS.get(name)
    if preset is None:
        valid = ", ".join(sorted(PRESETS))
        raise UnknownPresetError(f"unknown sensor preset {name!r} (valid: {valid})")
    return preset.config


# ---------------------------------------------------------------------------
# Range images and point clouds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RangeImage:
    """Per-beam distance (meters, 0 = no return) and intensity in [0, 1]."""

    depth: np.ndarray
    intensity: np.ndarray

    def __post_init__(self) -> None:
        depth = _readonly(self.depth, "depth", 2)
        intensity = _readonly(self.intensity, "intensity", 2)
        if depth.shape != intensity.shape:
            raise DimensionMismatchError(
                f"depth {depth.shape} and intensity {intensity.shape} differ in shape"
            )
        if not np.all(np.isfinite(depth)) or (depth.size and depth.min() < 0.0):
            raise DataError("depth values must be finite and non-negative")
        _check_unit_range(intensity, "intensity")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "intensity", intensity)

    @classmethod
    def empty(cls, rows: int, cols: int) -> RangeImage:
        zeros = np.zeros((rows, cols))
        return cls(zeros, zeros)

    @property
    def rows(self) -> int:
        return int(self.depth.shape[0])

    @property
    def cols(self) -> int:
        return int(self.depth.shape[1])

    @property
    def returns(self) -> np.ndarray:
        """Boolean grid of cells holding a return."""
        return self.depth > 0.0

    def same_as(self, other: RangeImage) -> bool:
        return np.array_equal(self.depth, other.depth) and np.array_equal(
            self.intensity, other.intensity
        )


class Point(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered (x, y, z, intensity) records in the sensor frame."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise DataError("point cloud contains non-finite values")
        _check_unit_range(pts[:, 3], "point intensity")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points: Iterable[Point | tuple[float, ...]]) -> PointCloud:
        return cls(np.array([tuple(p) for p in points], dtype=np.float64).reshape(-1, 4))

    @classmethod
    def from_arrays(cls, xyz: np.ndarray, intensity: np.ndarray) -> PointCloud:
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        intensity = np.asarray(intensity, dtype=np.float64).reshape(-1, 1)
        return cls(np.hstack([xyz, intensity]))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def __iter__(self) -> Iterator[Point]:
        for row in self.points:
            yield Point(*(float(v) for v in row))

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def subset(self, keep: np.ndarray) -> PointCloud:
        """Return the points selected by boolean *keep*, order preserved."""
        return PointCloud(self.points[np.asarray(keep, dtype=bool)])

    def same_as(self, other: PointCloud) -> bool:
        return np.array_equal(self.points, other.points)


# ---------------------------------------------------------------------------
# Camera
# ---------------------------------------------------------------------------

# Sensor frame: x forward, y left, z up. Camera frame: x right, y down, z forward.
FORWARD_LOOKING_ROTATION = ((0.0, -1.0, 0.0), (0.0, 0.0, -1.0), (1.0, 0.0, 0.0))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation + translation mapping sensor coordinates to camera coordinates."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        rot = _readonly(self.rotation, "rotation", 2)
        trans = _readonly(self.translation, "translation", 1)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise DimensionMismatchError("rotation must be 3x3 and translation 3-vector")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise DataError("extrinsic contains non-finite values")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > ORTHONORMAL_TOLERANCE:
            raise DataError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise DataError("rotation must have determinant 1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3))

    @classmethod
    def forward_looking(cls, translation: Iterable[float] = (0.0, 0.0, 0.0)) -> RigidTransform:
        """Camera looking along sensor +x, optionally offset by *translation*."""
        return cls(np.array(FORWARD_LOOKING_ROTATION), np.array(list(translation)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) sensor-frame points into the camera frame."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera optical center expressed in the sensor frame."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera. Pixel (u, v) has its center at integer coordinates."""

    width: int = 512
    height: int = 256
    fx: float = 256.0
    fy: float = 256.0
    cx: float | None = None
    cy: float | None = None
    extrinsic: RigidTransform = field(default_factory=RigidTransform.forward_looking)

    def __post_init__(self) -> None:
        if int(self.width) != self.width or self.width < 1:
            raise DataError(f"camera width must be a positive integer, got {self.width}")
        if int(self.height) != self.height or self.height < 1:
            raise DataError(f"camera height must be a positive integer, got {self.height}")
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise DataError("focal lengths must be positive")
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def check_grid(self, grid: np.ndarray, name: str) -> None:
        if grid.shape[:2] != self.shape:
            raise DimensionMismatchError(
                f"{name} is {grid.shape[0]}x{grid.shape[1]}, "
                f"camera is {self.height}x{self.width}"
            )


@dataclass(frozen=True, eq=False)
class AppearanceImage:
    """RGB image in [0, 1] with shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = _readonly(self.pixels, "appearance image", 3)
        if pixels.shape[2] != 3:
            raise DimensionMismatchError("appearance image must have 3 channels")
        _check_unit_range(pixels, "appearance image")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DenseIntensityMask:
    """Camera-aligned mask M in [0, 1]; optional depth buffer (0 = uncovered)."""

    values: np.ndarray
    depth: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = _readonly(self.values, "mask", 2)
        _check_unit_range(values, "mask")
        object.__setattr__(self, "values", values)
        if self.depth is not None:
            depth = _readonly(self.depth, "mask depth", 2)
            if depth.shape != values.shape:
                raise DimensionMismatchError("mask depth and values differ in shape")
            if np.any((values > 0.0) & ~(depth > 0.0)):
                raise DataError("mask has intensity at a pixel without depth")
            object.__setattr__(self, "depth", depth)

    @classmethod
    def empty(cls, height: int, width: int) -> DenseIntensityMask:
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.values.shape[0]), int(self.values.shape[1]))

    @property
    def valid(self) -> np.ndarray:
        """Boolean grid ``M > 0``."""
        return self.values > 0.0

    @property
    def covered(self) -> np.ndarray:
        """Pixels reached by any triangle (falls back to ``M > 0``)."""
        if self.depth is None:
            return self.valid
        return self.depth > 0.0


@dataclass(frozen=True, eq=False)
class PredictorOutput:
    """Raydrop probability and intensity channels, both in [0, 1]."""

    raydrop: np.ndarray
    intensity: np.ndarray

    def __post_init__(self) -> None:
        raydrop = _readonly(self.raydrop, "raydrop channel", 2)
        intensity = _readonly(self.intensity, "intensity channel", 2)
        if raydrop.shape != intensity.shape:
            raise DimensionMismatchError("predictor channels differ in shape")
        _check_unit_range(raydrop, "raydrop channel")
        _check_unit_range(intensity, "intensity channel")
        object.__setattr__(self, "raydrop", raydrop)
        object.__setattr__(self, "intensity", intensity)

    @classmethod
    def from_mask(cls, mask: DenseIntensityMask) -> PredictorOutput:
        """Read a dense mask as a perfect prediction: raydrop = 1[M > 0]."""
        return cls(mask.valid.astype(np.float64), mask.values)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.raydrop.shape[0]), int(self.raydrop.shape[1]))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    message: str
    cell: tuple[int, int] | None = None

    def __str__(self) -> str:
        return self.message


def validate_range_image(ri: RangeImage, cfg: SensorConfig) -> list[Violation]:
    """Return every invariant violation of *ri* against *cfg* (empty = valid)."""
    if (ri.rows, ri.cols) != cfg.shape:
        return [
            Violation(
                f"range image is {ri.rows}x{ri.cols}, sensor {cfg.name} is "
                f"{cfg.rows}x{cfg.cols}"
            )
        ]
    violations: list[Violation] = []
    for i, j in zip(*np.nonzero((ri.depth == 0.0) & (ri.intensity != 0.0))):
        cell = (int(i), int(j))
        violations.append(
            Violation(f"intensity without return at ({cell[0]},{cell[1]})", cell)
        )
    for i, j in zip(*np.nonzero(ri.depth > cfg.max_range)):
        cell = (int(i), int(j))
        violations.append(
            Violation(
                f"depth {ri.depth[cell]:.3f} m beyond max range at ({cell[0]},{cell[1]})",
                cell,
            )
        )
    return violations
