"""Enhancement of clean raycasted clouds and the metrics used to score predictions."""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from lidarenhance._core import (
    CameraModel,
    DenseIntensityMask,
    PointCloud,
    PredictorOutput,
    RangeImage,
    SensorConfig,
)
from lidarenhance._errors import DataError, DimensionMismatchError
from lidarenhance._geometry import (
    inside_image,
    nearest_pixel,
    pointcloud_to_range_image,
    project_points,
    range_image_to_pointcloud,
    sample_bilinear_many,
)

DEFAULT_DROP_PROBABILITY = 0.45
SWEEP_PROBABILITIES = tuple(round(0.05 * k, 2) for k in range(11))


class OutOfFrustum(str, enum.Enum):
    """What happens to points that do not project onto the image."""

    KEEP = "keep"
    DROP = "drop"


class EnhanceMode(str, enum.Enum):
    VANILLA = "vanilla"
    NOISE_ONLY = "noise-only"
    LEARNED = "learned"
    FULL = "full"

    @property
    def uses_prediction(self) -> bool:
        return self in (EnhanceMode.LEARNED, EnhanceMode.FULL)

    @property
    def uses_noise(self) -> bool:
        return self in (EnhanceMode.NOISE_ONLY, EnhanceMode.FULL)


@dataclass(frozen=True)
class NoiseModel:
    """Uniform random raydrop: every point is removed with probability ``p``."""

    p: float = DEFAULT_DROP_PROBABILITY
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.p) and 0.0 <= self.p <= 1.0):
            raise DataError(f"drop probability must lie in [0, 1], got {self.p}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise DataError(f"seed must be a non-negative integer, got {self.seed}")

    def uniforms(self, count: int) -> np.ndarray:
        """One draw per point index from a counter-based generator keyed by the seed."""
        return np.random.Generator(np.random.Philox(key=int(self.seed))).random(count)


@dataclass(frozen=True)
class EnhanceOptions:
    threshold: float = 0.5
    out_of_frustum: OutOfFrustum = OutOfFrustum.KEEP
    mode: EnhanceMode = EnhanceMode.FULL

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise DataError(f"threshold must lie in [0, 1], got {self.threshold}")
        object.__setattr__(self, "out_of_frustum", OutOfFrustum(self.out_of_frustum))
        object.__setattr__(self, "mode", EnhanceMode(self.mode))


# ---------------------------------------------------------------------------
# Enhancement
# ---------------------------------------------------------------------------


def enhance_pointcloud(
    pc: PointCloud,
    pred: PredictorOutput,
    cam: CameraModel,
    opts: EnhanceOptions | None = None,
) -> PointCloud:
    """Gate points on the raydrop channel and resample their intensity.

    A point is in the frustum when it lies in front of the camera and projects
    into [0, W-1] x [0, H-1]. The gate reads the nearest pixel of the raydrop
    channel (strict ``>``); the intensity is a bilinear sample.
    """
    opts = opts or EnhanceOptions()
    if pred.shape != cam.shape:
        raise DimensionMismatchError(
            f"prediction is {pred.shape[0]}x{pred.shape[1]}, "
            f"camera is {cam.height}x{cam.width}"
        )
    if len(pc) == 0:
        return pc

    u, v, _, in_front = project_points(pc.xyz, cam)
    in_view = in_front & inside_image(u, v, cam)
    points = pc.points.copy()
    keep = np.full(len(pc), opts.out_of_frustum is OutOfFrustum.KEEP)
    points[~in_view, 3] = 0.0

    if in_view.any():
        uu, vv = u[in_view], v[in_view]
        row, col = nearest_pixel(uu, vv, cam)
        keep[in_view] = pred.raydrop[row, col] > opts.threshold
        points[in_view, 3] = sample_bilinear_many(pred.intensity, uu, vv)
    return PointCloud(points[keep])


def apply_random_raydrop(pc: PointCloud, noise: NoiseModel) -> PointCloud:
    """Remove each point independently with probability ``noise.p``; order kept."""
    if noise.p == 0.0 or len(pc) == 0:
        return pc
    return pc.subset(noise.uniforms(len(pc)) >= noise.p)


def enhance_range_image(
    ri: RangeImage,
    cfg: SensorConfig,
    pred: PredictorOutput | None,
    cam: CameraModel,
    noise: NoiseModel | None = None,
    opts: EnhanceOptions | None = None,
) -> RangeImage:
    """Range image -> cloud -> enhancement -> random raydrop -> range image.

    ``opts.mode`` picks the stages: ``vanilla`` returns *ri* untouched,
    ``noise-only`` skips the prediction, ``learned`` skips the noise.
    """
    opts = opts or EnhanceOptions()
    noise = noise or NoiseModel()
    if opts.mode is EnhanceMode.VANILLA:
        return ri
    pc = range_image_to_pointcloud(ri, cfg)
    if opts.mode.uses_prediction:
        if pred is None:
            raise DataError(f"enhancement mode {opts.mode.value} needs a prediction")
        pc = enhance_pointcloud(pc, pred, cam, opts)
    if opts.mode.uses_noise:
        pc = apply_random_raydrop(pc, noise)
    return pointcloud_to_range_image(pc, cfg)


class SweepPoint(NamedTuple):
    p: float
    kept: int


def noise_sweep(
    pc: PointCloud, ps: Sequence[float] = SWEEP_PROBABILITIES, seed: int = 0
) -> list[SweepPoint]:
    """Point counts surviving random raydrop at every probability in *ps*."""
    return [SweepPoint(float(p), len(apply_random_raydrop(pc, NoiseModel(p, seed)))) for p in ps]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean grids; 1.0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"masks differ in shape: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def intensity_mae(pred: np.ndarray, truth: DenseIntensityMask) -> float:
    """Mean absolute intensity error over pixels with M > 0 (0 when none)."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionMismatchError(
            f"prediction {pred.shape} and truth {truth.shape} differ in shape"
        )
    valid = truth.valid
    if not valid.any():
        return 0.0
    return float(np.mean(np.abs(pred[valid] - truth.values[valid])))


@dataclass(frozen=True)
class EvalReport:
    iou: float
    mae: float


def evaluate(
    pred: PredictorOutput, truth: DenseIntensityMask, threshold: float = 0.5
) -> EvalReport:
    """Raydrop IoU of the thresholded channel and intensity MAE on valid pixels."""
    return EvalReport(
        iou=mask_iou(pred.raydrop > threshold, truth.valid),
        mae=intensity_mae(pred.intensity, truth),
    )
