"""Analytic scenes (ground plane + axis-aligned boxes) and their exact LiDAR response.

Scene coordinates share the sensor axes (x forward, y left, z up); the sensor
sits at ``origin``. The ground is the plane z = 0.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from lidarenhance._config import ConfigDocument, FieldSpec, Section, check_section, parse_config
from lidarenhance._core import (
    AppearanceImage,
    CameraModel,
    PredictorOutput,
    RangeImage,
    SensorConfig,
)
from lidarenhance._errors import ConfigError, DataError, NonUnitDirectionError
from lidarenhance._geometry import camera_rays, cell_directions, wraps

Vec3 = tuple[float, float, float]

DEFAULT_ORIGIN: Vec3 = (0.0, 0.0, 2.0)
UNIT_TOLERANCE = 1e-9
MIN_HIT_DISTANCE = 1e-9


@dataclass(frozen=True)
class Material:
    """Surface class: camera color, LiDAR reflectance and transparency."""

    name: str
    color: Vec3
    rho: float = 0.5
    transparent: bool = False

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("material name must not be empty")
        color = tuple(float(c) for c in self.color)
        if len(color) != 3 or not all(0.0 <= c <= 1.0 for c in color):
            raise DataError(f"material {self.name}: color must be three values in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise DataError(f"material {self.name}: rho must lie in [0, 1], got {self.rho}")
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "rho", float(self.rho))


@dataclass(frozen=True)
class Box:
    lo: Vec3
    hi: Vec3
    material: str

    def __post_init__(self) -> None:
        lo = tuple(float(c) for c in self.lo)
        hi = tuple(float(c) for c in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise DataError("box corners must be 3-vectors")
        if not all(a < b for a, b in zip(lo, hi)):
            raise DataError(f"box {lo}..{hi} must have positive extent on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, point: Sequence[float]) -> bool:
        return all(a <= p <= b for a, p, b in zip(self.lo, point, self.hi))


# Colors are distinct and none is black, so a pixel color names its material.
DEFAULT_PALETTE: tuple[Material, ...] = (
    Material("asphalt", (0.3, 0.3, 0.3), rho=0.15),
    Material("concrete", (0.75, 0.75, 0.7), rho=0.35),
    Material("brick", (0.7, 0.25, 0.2), rho=0.45),
    Material("foliage", (0.2, 0.6, 0.2), rho=0.25),
    Material("paint", (0.2, 0.3, 0.8), rho=0.5),
    Material("glass", (0.6, 0.85, 0.9), rho=0.0, transparent=True),
)


@dataclass(frozen=True)
class Scene:
    """Materials, an optional ground material and boxes referring to materials by name."""

    materials: tuple[Material, ...] = DEFAULT_PALETTE
    ground: str | None = "asphalt"
    boxes: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "materials", tuple(self.materials))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            raise DataError("material names must be unique")
        colors = [m.color for m in self.materials]
        if len(set(colors)) != len(colors):
            raise DataError("material colors must be unique")
        used = [b.material for b in self.boxes]
        if self.ground is not None:
            used.append(self.ground)
        for name in used:
            if name not in names:
                raise DataError(f"unknown material {name!r}")

    def material_index(self, name: str) -> int:
        return [m.name for m in self.materials].index(name)

    def material(self, name: str) -> Material:
        return self.materials[self.material_index(name)]


@dataclass(frozen=True, eq=False)
class Hit:
    distance: float
    normal: Vec3
    material: Material


# ---------------------------------------------------------------------------
# Tracing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceResult:
    """Per-ray nearest hit: distance (inf = miss), normal, material index (-1 = miss)."""

    distance: np.ndarray
    normal: np.ndarray
    material: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.material >= 0


def trace(
    scene: Scene, origin: Sequence[float], directions: np.ndarray, max_range: float = math.inf
) -> TraceResult:
    """Nearest intersection of each ray (any leading shape, last axis xyz).

    Boxes that contain the origin are ignored. Equal distances keep the surface
    tested first: the ground, then boxes in scene order.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    lead = d.shape[:-1]
    d = d.reshape(-1, 3)
    n = len(d)
    best = np.full(n, np.inf)
    normal = np.zeros((n, 3))
    material = np.full(n, -1, dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        if scene.ground is not None and o[2] != 0.0:
            t = np.where(d[:, 2] != 0.0, -o[2] / d[:, 2], np.inf)
            hit = (t > MIN_HIT_DISTANCE) & (t < best)
            best[hit] = t[hit]
            normal[hit] = (0.0, 0.0, 1.0 if o[2] > 0.0 else -1.0)
            material[hit] = scene.material_index(scene.ground)

        inv = 1.0 / d
        parallel = d == 0.0
        rows = np.arange(n)
        for box in scene.boxes:
            lo = np.array(box.lo)
            hi = np.array(box.hi)
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
            inside = (o >= lo) & (o <= hi)
            t_enter = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1))
            t_exit = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t0, t1))
            near = t_enter.max(axis=1)
            far = t_exit.min(axis=1)
            hit = (near <= far) & (near > MIN_HIT_DISTANCE) & (near < best)
            if not hit.any():
                continue
            axis = t_enter.argmax(axis=1)
            face = np.zeros((n, 3))
            face[rows, axis] = -np.sign(d[rows, axis])
            best[hit] = near[hit]
            normal[hit] = face[hit]
            material[hit] = scene.material_index(box.material)

    beyond = best > max_range
    best[beyond] = np.inf
    normal[beyond] = 0.0
    material[beyond] = -1
    return TraceResult(best.reshape(lead), normal.reshape(lead + (3,)), material.reshape(lead))


def raycast(
    scene: Scene, origin: Sequence[float], direction: Sequence[float], max_range: float = math.inf
) -> Hit | None:
    """Nearest hit along one unit-length ray within *max_range*."""
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,) or abs(float(np.linalg.norm(d)) - 1.0) > UNIT_TOLERANCE:
        raise NonUnitDirectionError(f"ray direction {tuple(d)} is not a unit vector")
    result = trace(scene, origin, d[None, :], max_range)
    if not result.hit[0]:
        return None
    return Hit(
        distance=float(result.distance[0]),
        normal=tuple(float(c) for c in result.normal[0]),
        material=scene.materials[int(result.material[0])],
    )


def lidar_intensity(hit: Hit, direction: Sequence[float], falloff: bool = False) -> float | None:
    """``rho * max(0, -n . d)``; None for transparent surfaces.

    With *falloff* the value is further scaled by ``min(1, 1 / distance**2)``.
    """
    if hit.material.transparent:
        return None
    cosine = max(0.0, -float(np.dot(hit.normal, direction)))
    value = hit.material.rho * cosine
    if falloff:
        value *= min(1.0, 1.0 / (hit.distance * hit.distance))
    return min(1.0, value)


def _intensities(
    scene: Scene, result: TraceResult, directions: np.ndarray, falloff: bool
) -> tuple[np.ndarray, np.ndarray]:
    """(returns, intensity) arrays for traced rays; transparent hits do not return."""
    rho = np.array([m.rho for m in scene.materials] + [0.0])
    transparent = np.array([m.transparent for m in scene.materials] + [True])
    index = np.where(result.hit, result.material, -1)
    returns = result.hit & ~transparent[index]
    cosine = np.maximum(0.0, -np.sum(result.normal * directions, axis=-1))
    value = rho[index] * cosine
    if falloff:
        with np.errstate(divide="ignore"):
            value = value * np.minimum(1.0, 1.0 / (result.distance * result.distance))
    return returns, np.where(returns, np.minimum(1.0, value), 0.0)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _render_range(
    scene: Scene, cfg: SensorConfig, origin: Sequence[float], falloff: bool, clean: bool
) -> RangeImage:
    directions = cell_directions(cfg)
    result = trace(scene, origin, directions, cfg.max_range)
    if clean:
        return RangeImage(np.where(result.hit, result.distance, 0.0), np.zeros(cfg.shape))
    returns, intensity = _intensities(scene, result, directions, falloff)
    return RangeImage(np.where(returns, result.distance, 0.0), intensity)


def render_frame(
    scene: Scene,
    cfg: SensorConfig,
    cam: CameraModel,
    origin: Sequence[float] = DEFAULT_ORIGIN,
    falloff: bool = False,
) -> tuple[AppearanceImage, RangeImage]:
    """Camera image of surface colors (black background) and the LiDAR range image."""
    center, rays = camera_rays(cam)
    seen = trace(scene, np.asarray(origin) + center, rays)
    colors = np.array([m.color for m in scene.materials] + [(0.0, 0.0, 0.0)])
    pixels = colors[np.where(seen.hit, seen.material, -1)]
    return AppearanceImage(pixels), _render_range(scene, cfg, origin, falloff, clean=False)


def render_clean_range_image(
    scene: Scene, cfg: SensorConfig, origin: Sequence[float] = DEFAULT_ORIGIN
) -> RangeImage:
    """Every hit within range, transparent or not, with zero intensity."""
    return _render_range(scene, cfg, origin, falloff=False, clean=True)


def _in_field(vectors: np.ndarray, cfg: SensorConfig) -> np.ndarray:
    x, y, z = vectors[..., 0], vectors[..., 1], vectors[..., 2]
    elevation = np.arctan2(z, np.hypot(x, y))
    ok = (elevation >= cfg.elev_min) & (elevation <= cfg.elev_max)
    if not wraps(cfg):
        azimuth = np.arctan2(y, x)
        ok &= (azimuth >= cfg.az_min) & (azimuth < cfg.az_max)
    return ok


def render_oracle_prediction(
    scene: Scene,
    cfg: SensorConfig,
    cam: CameraModel,
    origin: Sequence[float] = DEFAULT_ORIGIN,
    falloff: bool = False,
) -> PredictorOutput:
    """Exact per-pixel raydrop and intensity.

    For each pixel, the sensor casts a ray toward the surface point the pixel
    sees. Raydrop is 1 where that ray returns (opaque hit within range and
    inside the angular field); intensity is the oracle LiDAR intensity there.
    """
    o = np.asarray(origin, dtype=np.float64)
    center, rays = camera_rays(cam)
    seen = trace(scene, o + center, rays)
    distance = np.where(seen.hit, seen.distance, 0.0)
    target = center + rays * distance[..., None]
    norm = np.linalg.norm(target, axis=-1)
    usable = seen.hit & (norm > MIN_HIT_DISTANCE) & _in_field(target, cfg)
    directions = target / np.where(norm > 0.0, norm, 1.0)[..., None]
    directions[~usable] = (1.0, 0.0, 0.0)

    result = trace(scene, o, directions, cfg.max_range)
    returns, intensity = _intensities(scene, result, directions, falloff)
    returns &= usable
    return PredictorOutput(returns.astype(np.float64), np.where(returns, intensity, 0.0))


# ---------------------------------------------------------------------------
# Random scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneBounds:
    """Sampling ranges (meters) for box placement and size."""

    x: tuple[float, float] = (5.0, 20.0)
    y: tuple[float, float] = (-8.0, 8.0)
    size: tuple[float, float] = (1.0, 4.0)
    height: tuple[float, float] = (0.5, 4.0)


def random_scene(
    seed: int,
    bounds: SceneBounds | None = None,
    box_count: tuple[int, int] = (2, 6),
    palette: Sequence[Material] = DEFAULT_PALETTE,
) -> Scene:
    """Seeded scene: ground of ``palette[0]`` and boxes standing on it."""
    if not palette:
        raise DataError("material palette must not be empty")
    low, high = box_count
    if not 0 <= low <= high:
        raise DataError(f"invalid box count range {box_count}")
    bounds = bounds or SceneBounds()
    rng = np.random.default_rng(seed)
    choices = palette[1:] if len(palette) > 1 else palette

    boxes = []
    for _ in range(int(rng.integers(low, high + 1))):
        cx = rng.uniform(*bounds.x)
        cy = rng.uniform(*bounds.y)
        sx, sy = rng.uniform(*bounds.size, size=2)
        height = rng.uniform(*bounds.height)
        material = choices[int(rng.integers(len(choices)))]
        boxes.append(
            Box(
                (float(cx - sx / 2), float(cy - sy / 2), 0.0),
                (float(cx + sx / 2), float(cy + sy / 2), float(height)),
                material.name,
            )
        )
    return Scene(materials=tuple(palette), ground=palette[0].name, boxes=tuple(boxes))


# ---------------------------------------------------------------------------
# Scene description files
# ---------------------------------------------------------------------------

SCENE_SCHEMA: dict[str, dict[str, FieldSpec]] = {
    "material": {
        "name": FieldSpec("str", required=True),
        "color": FieldSpec("triple", low=0.0, high=1.0, required=True),
        "rho": FieldSpec("float", low=0.0, high=1.0),
        "transparent": FieldSpec("bool"),
    },
    "ground": {"material": FieldSpec("str", required=True)},
    "box": {
        "min": FieldSpec("triple", required=True),
        "max": FieldSpec("triple", required=True),
        "material": FieldSpec("str", required=True),
    },
}


def _section_error(section: Section, exc: DataError) -> ConfigError:
    return ConfigError(f"[{section.name}] {exc}", section.lineno)


def parse_scene(text: str) -> Scene:
    """Read a scene file: ``[material]`` and ``[box]`` sections, one ``[ground]``.

    Without ``[material]`` sections the default palette is used; without
    ``[ground]`` the scene has no ground plane.
    """
    doc: ConfigDocument = parse_config(text, SCENE_SCHEMA)
    materials = []
    for section in doc.named("material"):
        values = check_section(section, SCENE_SCHEMA["material"])
        try:
            materials.append(Material(**values))
        except DataError as exc:
            raise _section_error(section, exc) from exc
    boxes = []
    for section in doc.named("box"):
        values = check_section(section, SCENE_SCHEMA["box"])
        try:
            boxes.append(Box(values["min"], values["max"], values["material"]))
        except DataError as exc:
            raise _section_error(section, exc) from exc
    ground_section = doc.single("ground")
    ground = None
    if ground_section is not None:
        ground = str(check_section(ground_section, SCENE_SCHEMA["ground"])["material"])
    try:
        return Scene(tuple(materials) or DEFAULT_PALETTE, ground, tuple(boxes))
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def _triple(values: Sequence[float]) -> str:
    return ", ".join(repr(float(v)) for v in values)


def format_scene(scene: Scene) -> str:
    """Write *scene* in the grammar :func:`parse_scene` reads."""
    lines: list[str] = []
    for material in scene.materials:
        lines += [
            "[material]",
            f'name = "{material.name}"',
            f"color = {_triple(material.color)}",
            f"rho = {material.rho!r}",
            f"transparent = {'true' if material.transparent else 'false'}",
            "",
        ]
    if scene.ground is not None:
        lines += ["[ground]", f'material = "{scene.ground}"', ""]
    for box in scene.boxes:
        lines += [
            "[box]",
            f"min = {_triple(box.lo)}",
            f"max = {_triple(box.hi)}",
            f'material = "{box.material}"',
            "",
        ]
    return "\n".join(lines)
