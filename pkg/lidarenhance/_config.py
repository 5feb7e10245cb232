"""Run configuration: a small ``key = value`` grammar with ``[section]`` headers.

Grammar
-------
- ``#`` starts a comment (outside quotes).
- ``[name]`` opens a section; a section name may repeat (e.g. ``[box]``).
- ``key = value`` where value is ``true``/``false``, an integer, a float,
  a quoted string, a comma-separated triple of numbers, or a bare word.
- A key may appear once per section.
"""

from __future__ import annotations

import dataclasses
import math
import re
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

from lidarenhance._core import CameraModel, RigidTransform, SensorConfig, sensor_preset
from lidarenhance._densify import DensifyOptions
from lidarenhance._errors import ConfigError, DataError
from lidarenhance._pipeline import EnhanceMode, EnhanceOptions, NoiseModel, OutOfFrustum
from lidarenhance._train import TrainConfig

Value = bool | int | float | str | tuple[float, float, float]

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_.-]*)\s*\]$")
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?inf$")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    value: Value
    lineno: int


@dataclass
class Section:
    name: str
    lineno: int
    entries: dict[str, Entry] = field(default_factory=dict)

    def values(self) -> dict[str, Value]:
        return {key: entry.value for key, entry in self.entries.items()}


@dataclass
class ConfigDocument:
    """Sections in file order. Keys before the first header go to section ``""``."""

    sections: list[Section] = field(default_factory=list)

    def named(self, name: str) -> list[Section]:
        return [s for s in self.sections if s.name == name]

    def single(self, name: str) -> Section | None:
        """The one section called *name*, or None; repeating it is an error."""
        found = self.named(name)
        if len(found) > 1:
            raise ConfigError(f"section [{name}] may appear only once", found[1].lineno)
        return found[0] if found else None

    def __iter__(self) -> Iterator[Section]:
        return iter(self.sections)


def _strip_comment(line: str) -> str:
    quoted = False
    for index, char in enumerate(line):
        if char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            return line[:index]
    return line


def _parse_number(text: str) -> int | float | None:
    if _INT_RE.match(text):
        return int(text)
    if _FLOAT_RE.match(text):
        return float(text)
    return None


def parse_value(text: str, lineno: int = 0) -> Value:
    """Convert the right-hand side of an assignment to a typed value."""
    text = text.strip()
    if not text:
        raise ConfigError("missing value", lineno)
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"') or '"' in text[1:-1]:
            raise ConfigError(f"unterminated string {text}", lineno)
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
        numbers = [_parse_number(p) for p in parts]
        if len(parts) != 3 or any(n is None for n in numbers):
            raise ConfigError(f"expected three comma-separated numbers, got {text}", lineno)
        return (float(numbers[0]), float(numbers[1]), float(numbers[2]))
    number = _parse_number(text)
    if number is not None:
        return number
    if any(c.isspace() for c in text):
        raise ConfigError(f"bare value must be a single word: {text}", lineno)
    return text


def parse_config(text: str, schema: dict[str, Schema] | None = None) -> ConfigDocument:
    """Parse *text*; with a *schema*, also check section names, keys and values."""
    doc = ConfigDocument()
    current: Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            match = _SECTION_RE.match(line)
            if not match:
                raise ConfigError(f"malformed section header {line}", lineno)
            current = Section(match.group(1), lineno)
            doc.sections.append(current)
            continue
        key, sep, rest = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line}", lineno)
        if not _KEY_RE.match(key):
            raise ConfigError(f"invalid key {key!r}", lineno)
        if current is None:
            current = Section("", 0)
            doc.sections.append(current)
        if key in current.entries:
            first = current.entries[key].lineno
            raise ConfigError(f"duplicate key {key!r} (first set on line {first})", lineno)
        current.entries[key] = Entry(parse_value(rest, lineno), lineno)

    if schema is not None:
        for section in doc:
            if not section.name:
                first = next(iter(section.entries.values()))
                raise ConfigError("settings must follow a [section] header", first.lineno)
            if section.name not in schema:
                raise ConfigError(f"unknown section [{section.name}]", section.lineno)
            check_section(section, schema[section.name])
    return doc


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSpec:
    """Expected type (``bool``, ``int``, ``float``, ``str`` or ``triple``) and limits."""

    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple[str, ...] = ()
    required: bool = False


Schema = dict[str, FieldSpec]


def _check_value(key: str, entry: Entry, rule: FieldSpec) -> Value:
    value = entry.value
    kind = rule.kind
    if kind == "bool":
        ok = isinstance(value, bool)
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif kind == "str":
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, tuple)
    if not ok:
        raise ConfigError(f"{key} must be {kind}, got {entry.value!r}", entry.lineno)

    numbers = value if isinstance(value, tuple) else (value,)
    if kind in ("int", "float", "triple"):
        for number in numbers:
            if math.isnan(number):
                raise ConfigError(f"{key} must not be NaN", entry.lineno)
            if rule.low is not None and number < rule.low:
                raise ConfigError(f"{key} = {number} is below {rule.low}", entry.lineno)
            if rule.high is not None and number > rule.high:
                raise ConfigError(f"{key} = {number} is above {rule.high}", entry.lineno)
    if rule.choices and value not in rule.choices:
        allowed = ", ".join(rule.choices)
        raise ConfigError(f"{key} must be one of {allowed}, got {value!r}", entry.lineno)
    return value


def check_section(section: Section, schema: Schema) -> dict[str, Value]:
    """Typed values of *section*; unknown keys and bad values raise ConfigError."""
    out: dict[str, Value] = {}
    for key, entry in section.entries.items():
        rule = schema.get(key)
        if rule is None:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]", entry.lineno)
        out[key] = _check_value(key, entry, rule)
    for key, rule in schema.items():
        if rule.required and key not in out:
            raise ConfigError(f"[{section.name}] is missing {key!r}", section.lineno)
    return out


_POSITIVE = 1e-300

RUN_SCHEMA: dict[str, Schema] = {
    "sensor": {
        "preset": FieldSpec("str"),
        "rows": FieldSpec("int", low=1),
        "cols": FieldSpec("int", low=1),
        "elev_min": FieldSpec("float", low=-90.0, high=90.0),
        "elev_max": FieldSpec("float", low=-90.0, high=90.0),
        "az_min": FieldSpec("float", low=-360.0, high=360.0),
        "az_max": FieldSpec("float", low=-360.0, high=360.0),
        "max_range": FieldSpec("float", low=_POSITIVE),
    },
    "camera": {
        "width": FieldSpec("int", low=1),
        "height": FieldSpec("int", low=1),
        "fx": FieldSpec("float", low=_POSITIVE),
        "fy": FieldSpec("float", low=_POSITIVE),
        "cx": FieldSpec("float"),
        "cy": FieldSpec("float"),
        "translation": FieldSpec("triple"),
    },
    "noise": {
        "p": FieldSpec("float", low=0.0, high=1.0),
        "seed": FieldSpec("int", low=0),
    },
    "enhance": {
        "threshold": FieldSpec("float", low=0.0, high=1.0),
        "out_of_frustum": FieldSpec("str", choices=tuple(p.value for p in OutOfFrustum)),
        "mode": FieldSpec("str", choices=tuple(m.value for m in EnhanceMode)),
    },
    "train": {
        "epochs": FieldSpec("int", low=0),
        "learning_rate": FieldSpec("float", low=_POSITIVE),
        "decay_epochs": FieldSpec("int", low=0),
        "batch_size": FieldSpec("int", low=1),
        "seed": FieldSpec("int", low=0),
        "beta1": FieldSpec("float", low=0.0, high=1.0),
        "beta2": FieldSpec("float", low=0.0, high=1.0),
        "eps": FieldSpec("float", low=_POSITIVE),
        "raydrop_weight": FieldSpec("float", low=0.0),
        "intensity_weight": FieldSpec("float", low=0.0),
    },
    "model": {
        "channels": FieldSpec("int", low=1),
        "blocks": FieldSpec("int", low=0),
    },
    "densify": {
        "guard_px": FieldSpec("float", low=0.0),
        "max_depth_gap": FieldSpec("float", low=_POSITIVE),
    },
    "scene": {
        "origin": FieldSpec("triple"),
        "falloff": FieldSpec("bool"),
        "boxes_min": FieldSpec("int", low=0),
        "boxes_max": FieldSpec("int", low=0),
    },
}


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneDefaults:
    """Where the sensor sits in scene coordinates and how scenes are drawn."""

    origin: tuple[float, float, float] = (0.0, 0.0, 2.0)
    falloff: bool = False
    boxes_min: int = 2
    boxes_max: int = 6

    def __post_init__(self) -> None:
        if not 0 <= self.boxes_min <= self.boxes_max:
            raise DataError("need 0 <= boxes_min <= boxes_max")


@dataclass(frozen=True)
class ModelShape:
    channels: int = 8
    blocks: int = 2


@dataclass(frozen=True)
class RunConfig:
    sensor: SensorConfig = field(default_factory=lambda: sensor_preset("waymo64"))
    camera: CameraModel = field(default_factory=CameraModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    enhance: EnhanceOptions = field(default_factory=EnhanceOptions)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelShape = field(default_factory=ModelShape)
    densify: DensifyOptions = field(default_factory=DensifyOptions)
    scene: SceneDefaults = field(default_factory=SceneDefaults)


_DEGREE_KEYS = ("elev_min", "elev_max", "az_min", "az_max")


def _apply_sensor(values: dict[str, Value]) -> SensorConfig:
    preset = values.pop("preset", None)
    base = sensor_preset(str(preset)) if preset is not None else sensor_preset("waymo64")
    overrides: dict[str, object] = {}
    for key, value in values.items():
        overrides[key] = math.radians(float(value)) if key in _DEGREE_KEYS else value
    if overrides:
        overrides.setdefault("name", "custom")
    return dataclasses.replace(base, **overrides)


def _apply_camera(values: dict[str, Value]) -> CameraModel:
    translation = values.pop("translation", (0.0, 0.0, 0.0))
    return CameraModel(extrinsic=RigidTransform.forward_looking(translation), **values)


def _apply_enhance(values: dict[str, Value]) -> EnhanceOptions:
    if "out_of_frustum" in values:
        values["out_of_frustum"] = OutOfFrustum(values["out_of_frustum"])
    if "mode" in values:
        values["mode"] = EnhanceMode(values["mode"])
    return EnhanceOptions(**values)


def _apply_scene(values: dict[str, Value]) -> SceneDefaults:
    return SceneDefaults(**values)


_APPLY: dict[str, Callable[[dict[str, Value]], object]] = {
    "sensor": _apply_sensor,
    "camera": _apply_camera,
    "noise": lambda values: NoiseModel(**values),
    "enhance": _apply_enhance,
    "train": lambda values: TrainConfig(**values),
    "model": lambda values: ModelShape(**values),
    "densify": lambda values: DensifyOptions(**values),
    "scene": _apply_scene,
}


def config_from_text(text: str) -> RunConfig:
    """Build a RunConfig from configuration text; absent sections keep defaults."""
    doc = parse_config(text, RUN_SCHEMA)
    parts: dict[str, object] = {}
    for name, apply in _APPLY.items():
        section = doc.single(name)
        if section is None:
            continue
        values = check_section(section, RUN_SCHEMA[name])
        try:
            parts[name] = apply(values)
        except DataError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[{name}] {exc}", section.lineno) from exc
    return RunConfig(**parts)


def load_config(path: Path | None) -> RunConfig:
    """Load *path*, or return the defaults when no path is given."""
    if path is None:
        return RunConfig()
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path} is not UTF-8 text") from exc
    return config_from_text(text)
