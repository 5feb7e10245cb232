"""lidarenhance: learn LiDAR raydrop and intensity from camera images."""

from lidarenhance._config import (
    ConfigDocument,
    FieldSpec,
    ModelShape,
    RunConfig,
    SceneDefaults,
    config_from_text,
    load_config,
    parse_config,
)
from lidarenhance._core import (
    PRESETS,
    AppearanceImage,
    CameraModel,
    DenseIntensityMask,
    Point,
    PointCloud,
    PredictorOutput,
    RangeImage,
    RigidTransform,
    SensorConfig,
    SensorPreset,
    Violation,
    sensor_preset,
    validate_range_image,
)
from lidarenhance._densify import (
    DensifyOptions,
    MaskVertex,
    Triangle,
    VertexGrid,
    build_dense_mask,
    collect_vertices,
    mesh_cells,
    project_sparse,
    rasterize,
)
from lidarenhance._errors import (
    BadMagicError,
    ConfigError,
    DataError,
    DimensionMismatchError,
    DimensionOverflowError,
    FormatError,
    LidarEnhanceError,
    NonUnitDirectionError,
    OutOfBoundsError,
    TrainingDivergedError,
    TruncatedFileError,
    UnknownPresetError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    UsageError,
)
from lidarenhance._formats import (
    read_cloud,
    read_tensor,
    read_weights,
    write_cloud,
    write_pgm,
    write_ppm,
    write_tensor,
    write_weights,
)
from lidarenhance._geometry import (
    PixelCoord,
    pointcloud_to_range_image,
    project_to_camera,
    range_image_to_pointcloud,
    sample_bilinear,
)
from lidarenhance._model import (
    LossValue,
    RinetLite,
    combine_prediction,
    intensity_loss,
    predict,
    raydrop_loss,
    total_loss,
)
from lidarenhance._pipeline import (
    EnhanceMode,
    EnhanceOptions,
    EvalReport,
    NoiseModel,
    OutOfFrustum,
    apply_random_raydrop,
    enhance_pointcloud,
    enhance_range_image,
    evaluate,
    intensity_mae,
    mask_iou,
    noise_sweep,
)
from lidarenhance._scene import (
    DEFAULT_PALETTE,
    Box,
    Hit,
    Material,
    Scene,
    SceneBounds,
    format_scene,
    lidar_intensity,
    parse_scene,
    random_scene,
    raycast,
    render_clean_range_image,
    render_frame,
    render_oracle_prediction,
)
from lidarenhance._train import (
    TrainConfig,
    TrainResult,
    fit_scalar_l1,
    gradient_check,
    learning_rate,
    train,
)

__all__ = [
    "DEFAULT_PALETTE",
    "PRESETS",
    "AppearanceImage",
    "BadMagicError",
    "Box",
    "CameraModel",
    "ConfigDocument",
    "ConfigError",
    "DataError",
    "DenseIntensityMask",
    "DensifyOptions",
    "DimensionMismatchError",
    "DimensionOverflowError",
    "EnhanceMode",
    "EnhanceOptions",
    "EvalReport",
    "FieldSpec",
    "FormatError",
    "Hit",
    "LidarEnhanceError",
    "LossValue",
    "MaskVertex",
    "Material",
    "ModelShape",
    "NoiseModel",
    "NonUnitDirectionError",
    "OutOfBoundsError",
    "OutOfFrustum",
    "PixelCoord",
    "Point",
    "PointCloud",
    "PredictorOutput",
    "RangeImage",
    "RigidTransform",
    "RinetLite",
    "RunConfig",
    "Scene",
    "SceneBounds",
    "SceneDefaults",
    "SensorConfig",
    "SensorPreset",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "Triangle",
    "TruncatedFileError",
    "UnknownPresetError",
    "UnsupportedDtypeError",
    "UnsupportedVersionError",
    "UsageError",
    "VertexGrid",
    "Violation",
    "apply_random_raydrop",
    "build_dense_mask",
    "collect_vertices",
    "combine_prediction",
    "config_from_text",
    "enhance_pointcloud",
    "enhance_range_image",
    "evaluate",
    "fit_scalar_l1",
    "format_scene",
    "gradient_check",
    "intensity_loss",
    "intensity_mae",
    "learning_rate",
    "lidar_intensity",
    "load_config",
    "mask_iou",
    "mesh_cells",
    "noise_sweep",
    "parse_config",
    "parse_scene",
    "pointcloud_to_range_image",
    "predict",
    "project_sparse",
    "project_to_camera",
    "random_scene",
    "range_image_to_pointcloud",
    "rasterize",
    "raycast",
    "raydrop_loss",
    "read_cloud",
    "read_tensor",
    "read_weights",
    "render_clean_range_image",
    "render_frame",
    "render_oracle_prediction",
    "sample_bilinear",
    "sensor_preset",
    "total_loss",
    "train",
    "validate_range_image",
    "write_cloud",
    "write_pgm",
    "write_ppm",
    "write_tensor",
    "write_weights",
]
