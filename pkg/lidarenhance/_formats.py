"""Binary file formats: tensors, model weights, point clouds and PGM/PPM previews.

All multi-byte values are little-endian.

Tensor (``RTNS``)::

    magic "RTNS" | u32 version = 1 | u32 dtype = 1 (float32) | u32 rank
    | rank x u32 dims | row-major float32 payload

Weights (``RTNW``)::

    magic "RTNW" | u32 version = 1 | u32 count
    | count x (u32 name length | UTF-8 name | embedded tensor record)

Cloud: headerless float32 quadruples (x, y, z, intensity).
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from lidarenhance._core import (
    AppearanceImage,
    DenseIntensityMask,
    PointCloud,
    PredictorOutput,
    RangeImage,
)
from lidarenhance._errors import (
    BadMagicError,
    DimensionMismatchError,
    DimensionOverflowError,
    FormatError,
    TruncatedFileError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
)
from lidarenhance._model import RinetLite, param_shapes

TENSOR_MAGIC = b"RTNS"
WEIGHTS_MAGIC = b"RTNW"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1
MAX_ELEMENTS = 2**31 - 1
CLOUD_RECORD_BYTES = 16
CONFIG_CHANNELS = "cfg.C"
CONFIG_BLOCKS = "cfg.N"

_U32 = struct.Struct("<I")
_U32_MAX = 2**32 - 1
_BLOCK_TENSORS = len(param_shapes(1, 1)) - len(param_shapes(1, 0))


def _read_u32(buf: bytes, offset: int, what: str) -> tuple[int, int]:
    end = offset + 4
    if end > len(buf):
        raise TruncatedFileError(f"file ends inside {what}")
    return _U32.unpack_from(buf, offset)[0], end


def _check_magic(buf: bytes, offset: int, magic: bytes) -> int:
    end = offset + len(magic)
    if end > len(buf):
        raise TruncatedFileError("file ends inside the magic number")
    found = bytes(buf[offset:end])
    if found != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {found!r}")
    return end


# ---------------------------------------------------------------------------
# Tensors
# ---------------------------------------------------------------------------


def pack_tensor(values: np.ndarray) -> bytes:
    """Serialize *values* as a float32 tensor record."""
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        raise FormatError("tensor contains non-finite values")
    if any(dim > _U32_MAX for dim in arr.shape) or arr.size > MAX_ELEMENTS:
        raise DimensionOverflowError(f"tensor of shape {arr.shape} is too large")
    header = TENSOR_MAGIC + struct.pack(
        f"<III{arr.ndim}I", FORMAT_VERSION, DTYPE_FLOAT32, arr.ndim, *arr.shape
    )
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def unpack_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor record at *offset*; returns (float32 array, end offset)."""
    offset = _check_magic(buf, offset, TENSOR_MAGIC)
    version, offset = _read_u32(buf, offset, "the version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported tensor version {version}")
    dtype, offset = _read_u32(buf, offset, "the dtype")
    if dtype != DTYPE_FLOAT32:
        raise UnsupportedDtypeError(f"unsupported tensor dtype code {dtype}")
    rank, offset = _read_u32(buf, offset, "the rank")
    dims = []
    for axis in range(rank):
        dim, offset = _read_u32(buf, offset, f"dimension {axis}")
        dims.append(dim)
    count = math.prod(dims)
    if count > MAX_ELEMENTS:
        raise DimensionOverflowError(f"tensor dims {tuple(dims)} exceed {MAX_ELEMENTS} elements")
    end = offset + 4 * count
    if end > len(buf):
        raise TruncatedFileError(
            f"tensor payload needs {4 * count} bytes, {len(buf) - offset} present"
        )
    values = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims)
    return values.astype(np.float32), end


def read_tensor(path: Path) -> np.ndarray:
    buf = path.read_bytes()
    values, end = unpack_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after the tensor")
    return values


def write_tensor(values: np.ndarray, path: Path) -> None:
    path.write_bytes(pack_tensor(values))


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def pack_weights(model: RinetLite) -> bytes:
    entries: list[tuple[str, np.ndarray]] = [
        (CONFIG_CHANNELS, np.array([model.channels], dtype=np.float32)),
        (CONFIG_BLOCKS, np.array([model.blocks], dtype=np.float32)),
    ]
    entries.extend(model.named_parameters())
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", FORMAT_VERSION, len(entries))]
    for name, values in entries:
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)) + encoded)
        chunks.append(pack_tensor(values))
    return b"".join(chunks)


def _config_value(tensors: dict[str, np.ndarray], name: str) -> int:
    value = tensors.pop(name, None)
    if value is None:
        raise FormatError(f"weights file lacks the {name} entry")
    if value.shape != (1,) or value[0] != int(value[0]) or value[0] < 0:
        raise FormatError(f"{name} must hold one non-negative integer")
    return int(value[0])


def unpack_weights(buf: bytes) -> RinetLite:
    offset = _check_magic(buf, 0, WEIGHTS_MAGIC)
    version, offset = _read_u32(buf, offset, "the version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported weights version {version}")
    count, offset = _read_u32(buf, offset, "the entry count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        length, offset = _read_u32(buf, offset, "a name length")
        if offset + length > len(buf):
            raise TruncatedFileError("file ends inside a tensor name")
        try:
            name = bytes(buf[offset : offset + length]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not UTF-8") from exc
        offset += length
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tensors[name], offset = unpack_tensor(buf, offset)
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after the last tensor")

    channels = _config_value(tensors, CONFIG_CHANNELS)
    blocks = _config_value(tensors, CONFIG_BLOCKS)
    if blocks > len(tensors) // _BLOCK_TENSORS:
        raise FormatError(
            f"{CONFIG_BLOCKS} = {blocks} but the file holds only {len(tensors)} tensors"
        )
    expected = param_shapes(channels, blocks)
    for name, values in tensors.items():
        if name in expected and values.shape != expected[name]:
            raise DimensionMismatchError(
                f"{name} has shape {values.shape}, RinetLite(C={channels}, N={blocks}) "
                f"expects {expected[name]}"
            )
    params = {name: values.astype(np.float64) for name, values in tensors.items()}
    return RinetLite(channels, blocks, params)


def read_weights(path: Path) -> RinetLite:
    return unpack_weights(path.read_bytes())


def write_weights(model: RinetLite, path: Path) -> None:
    path.write_bytes(pack_weights(model))


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------


def pack_cloud(pc: PointCloud) -> bytes:
    return np.ascontiguousarray(pc.points, dtype="<f4").tobytes()


def unpack_cloud(buf: bytes) -> PointCloud:
    if len(buf) % CLOUD_RECORD_BYTES:
        raise TruncatedFileError(
            f"cloud of {len(buf)} bytes is not a whole number of "
            f"{CLOUD_RECORD_BYTES}-byte records"
        )
    records = np.frombuffer(buf, dtype="<f4").reshape(-1, 4)
    return PointCloud(records.astype(np.float64))


def read_cloud(path: Path) -> PointCloud:
    return unpack_cloud(path.read_bytes())


def write_cloud(pc: PointCloud, path: Path) -> None:
    path.write_bytes(pack_cloud(pc))


# ---------------------------------------------------------------------------
# Domain values <-> tensors
# ---------------------------------------------------------------------------


def range_image_to_tensor(ri: RangeImage) -> np.ndarray:
    """(2, rows, cols): depth plane, then intensity plane."""
    return np.stack([ri.depth, ri.intensity])


def tensor_to_range_image(values: np.ndarray) -> RangeImage:
    if values.ndim != 3 or values.shape[0] != 2:
        raise DimensionMismatchError(f"range image tensor must be 2xRxC, got {values.shape}")
    return RangeImage(values[0], values[1])


def prediction_to_tensor(pred: PredictorOutput) -> np.ndarray:
    return np.stack([pred.raydrop, pred.intensity])


def tensor_to_prediction(values: np.ndarray) -> PredictorOutput:
    """A 2xHxW predictor tensor, or an HxW mask read as a perfect prediction."""
    if values.ndim == 2:
        return PredictorOutput.from_mask(DenseIntensityMask(values))
    if values.ndim != 3 or values.shape[0] != 2:
        raise DimensionMismatchError(f"prediction tensor must be 2xHxW or HxW, got {values.shape}")
    return PredictorOutput(values[0], values[1])


def tensor_to_mask(values: np.ndarray, depth: np.ndarray | None = None) -> DenseIntensityMask:
    if values.ndim != 2:
        raise DimensionMismatchError(f"mask tensor must be HxW, got {values.shape}")
    return DenseIntensityMask(values, depth)


def tensor_to_image(values: np.ndarray) -> AppearanceImage:
    if values.ndim != 3 or values.shape[2] != 3:
        raise DimensionMismatchError(f"image tensor must be HxWx3, got {values.shape}")
    return AppearanceImage(values)


# ---------------------------------------------------------------------------
# Previews
# ---------------------------------------------------------------------------


def _to_bytes(values: np.ndarray) -> bytes:
    values = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=0.0)
    levels = np.floor(255.0 * np.clip(values, 0.0, 1.0) + 0.5)
    return levels.astype(np.uint8).tobytes()


def write_pgm(grid: np.ndarray, path: Path) -> None:
    """Binary 8-bit grayscale (P5); a value x becomes round(255 x)."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DimensionMismatchError(f"PGM needs an HxW grid, got {grid.shape}")
    height, width = grid.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + _to_bytes(grid))


def write_ppm(image: AppearanceImage | np.ndarray, path: Path) -> None:
    """Binary 8-bit RGB (P6)."""
    pixels = image.pixels if isinstance(image, AppearanceImage) else np.asarray(image)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DimensionMismatchError(f"PPM needs an HxWx3 image, got {pixels.shape}")
    height, width = pixels.shape[:2]
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + _to_bytes(pixels))
