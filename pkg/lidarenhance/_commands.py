"""Subcommand implementations. Each takes the parsed Namespace and raises on failure."""

from __future__ import annotations

import dataclasses
from argparse import Namespace
from pathlib import Path

import numpy as np

from lidarenhance._config import RunConfig, load_config
from lidarenhance._console import format_fields, report, warn
from lidarenhance._core import validate_range_image
from lidarenhance._densify import build_dense_mask, project_sparse
from lidarenhance._errors import DataError, UsageError
from lidarenhance._formats import (
    prediction_to_tensor,
    range_image_to_tensor,
    read_cloud,
    read_tensor,
    read_weights,
    tensor_to_image,
    tensor_to_mask,
    tensor_to_prediction,
    tensor_to_range_image,
    write_cloud,
    write_pgm,
    write_ppm,
    write_tensor,
    write_weights,
)
from lidarenhance._geometry import pointcloud_to_range_image, range_image_to_pointcloud
from lidarenhance._model import RinetLite, predict
from lidarenhance._pipeline import (
    SWEEP_PROBABILITIES,
    EnhanceMode,
    OutOfFrustum,
    apply_random_raydrop,
    enhance_pointcloud,
    evaluate,
    noise_sweep,
)
from lidarenhance._scene import (
    Scene,
    format_scene,
    parse_scene,
    random_scene,
    render_clean_range_image,
    render_frame,
)
from lidarenhance._train import Sample, train

IMAGE_SUFFIX = ".image.rtns"
MASK_SUFFIX = ".mask.rtns"
RANGE_SUFFIX = ".range.rtns"
CLEAN_SUFFIX = ".clean.bin"
SCENE_SUFFIX = ".scene.cfg"


def _run_config(args: Namespace) -> RunConfig:
    return load_config(getattr(args, "config", None))


def _overrides(**values: object) -> dict[str, object]:
    """Drop options the user did not pass."""
    return {key: value for key, value in values.items() if value is not None}


def _frame_scene(cfg: RunConfig, seed: int) -> Scene:
    return random_scene(seed, box_count=(cfg.scene.boxes_min, cfg.scene.boxes_max))


def cmd_raycast(args: Namespace) -> None:
    cfg = _run_config(args)
    if args.scene is not None:
        scene = parse_scene(args.scene.read_text(encoding="utf-8"))
    else:
        scene = _frame_scene(cfg, args.seed)
    image, ri = render_frame(scene, cfg.sensor, cfg.camera, cfg.scene.origin, cfg.scene.falloff)
    write_tensor(image.pixels, args.out_image)
    write_tensor(range_image_to_tensor(ri), args.out_range)
    if args.clean_out is not None:
        clean = render_clean_range_image(scene, cfg.sensor, cfg.scene.origin)
        write_cloud(range_image_to_pointcloud(clean, cfg.sensor), args.clean_out)
    if args.preview is not None:
        write_ppm(image, args.preview)
    report(format_fields(returns=int(ri.returns.sum()), cells=int(ri.depth.size)))


def cmd_densify(args: Namespace) -> None:
    cfg = _run_config(args)
    ri = tensor_to_range_image(read_tensor(args.range))
    violations = validate_range_image(ri, cfg.sensor)
    if violations:
        more = f" (+{len(violations) - 1} more)" if len(violations) > 1 else ""
        raise DataError(f"{args.range}: {violations[0]}{more}")
    if args.sparse:
        mask = project_sparse(ri, cfg.sensor, cfg.camera)
    else:
        options = dataclasses.replace(cfg.densify, **_overrides(guard_px=args.guard_px))
        mask = build_dense_mask(ri, cfg.sensor, cfg.camera, options)
    write_tensor(mask.values, args.out)
    if args.depth_out is not None:
        write_tensor(mask.depth, args.depth_out)
    report(format_fields(covered=int(mask.covered.sum()), valid=int(mask.valid.sum())))


def _load_pairs(data: Path) -> list[Sample]:
    if not data.is_dir():
        raise DataError(f"{data} is not a directory")
    pairs = []
    for image_path in sorted(data.glob(f"*{IMAGE_SUFFIX}")):
        stem = image_path.name[: -len(IMAGE_SUFFIX)]
        mask_path = data / f"{stem}{MASK_SUFFIX}"
        if not mask_path.is_file():
            raise DataError(f"{image_path.name} has no matching {mask_path.name}")
        pairs.append(
            (tensor_to_image(read_tensor(image_path)), tensor_to_mask(read_tensor(mask_path)))
        )
    if not pairs:
        raise DataError(f"no *{IMAGE_SUFFIX} files in {data}")
    return pairs


def cmd_train(args: Namespace) -> None:
    cfg = _run_config(args)
    # A shorter --epochs also shortens the decay window.
    decay = None
    if args.epochs is not None and args.epochs < cfg.train.decay_epochs:
        decay = args.epochs
    train_cfg = dataclasses.replace(
        cfg.train,
        **_overrides(
            epochs=args.epochs,
            decay_epochs=decay,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            seed=args.seed,
        ),
    )
    channels = args.channels if args.channels is not None else cfg.model.channels
    blocks = args.blocks if args.blocks is not None else cfg.model.blocks
    dataset = _load_pairs(args.data)
    report(format_fields(samples=len(dataset), epochs=train_cfg.epochs))
    model = RinetLite.initialize(channels, blocks, seed=train_cfg.seed)
    result = train(model, dataset, train_cfg, report=report)
    write_weights(result.model, args.out)


def cmd_predict(args: Namespace) -> None:
    model = read_weights(args.weights)
    image = tensor_to_image(read_tensor(args.image))
    write_tensor(prediction_to_tensor(predict(model, image)), args.out)


def cmd_enhance(args: Namespace) -> None:
    cfg = _run_config(args)
    opts = dataclasses.replace(
        cfg.enhance,
        **_overrides(
            threshold=args.threshold,
            mode=None if args.mode is None else EnhanceMode(args.mode),
            out_of_frustum=(
                None if args.out_of_frustum is None else OutOfFrustum(args.out_of_frustum)
            ),
        ),
    )
    noise = dataclasses.replace(cfg.noise, **_overrides(p=args.noise_p, seed=args.seed))
    pc = read_cloud(args.cloud)
    count_in = len(pc)
    if opts.mode.uses_prediction:
        if args.prediction is None:
            raise UsageError(f"--prediction is required in {opts.mode.value} mode")
        pred = tensor_to_prediction(read_tensor(args.prediction))
        pc = enhance_pointcloud(pc, pred, cfg.camera, opts)
    elif args.prediction is not None:
        warn(f"--prediction is ignored in {opts.mode.value} mode")
    if opts.mode.uses_noise:
        pc = apply_random_raydrop(pc, noise)
    write_cloud(pc, args.out)
    if args.range_out is not None:
        ri = pointcloud_to_range_image(pc, cfg.sensor)
        write_tensor(range_image_to_tensor(ri), args.range_out)
    report(format_fields(mode=opts.mode.value, points_in=count_in, points_out=len(pc)))


def cmd_eval(args: Namespace) -> None:
    pred = tensor_to_prediction(read_tensor(args.prediction))
    truth = tensor_to_mask(read_tensor(args.truth))
    result = evaluate(pred, truth, args.threshold)
    report(format_fields(iou=result.iou))
    report(format_fields(mae=result.mae))


def cmd_viz(args: Namespace) -> None:
    values = read_tensor(args.tensor).astype(np.float64)
    if values.ndim == 3 and values.shape[2] == 3 and args.channel is None:
        write_ppm(values, args.out)
        return
    if values.ndim == 3:
        channel = args.channel or 0
        if channel >= values.shape[0]:
            raise DataError(f"tensor has {values.shape[0]} planes, --channel {channel} requested")
        values = values[channel]
    elif values.ndim != 2:
        raise DataError(f"cannot visualize a tensor of shape {values.shape}")
    if args.normalize and values.size and values.max() > 0.0:
        values = values / values.max()
    write_pgm(values, args.out)


def cmd_gen_dataset(args: Namespace) -> None:
    cfg = _run_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        scene = _frame_scene(cfg, seed)
        image, ri = render_frame(scene, cfg.sensor, cfg.camera, cfg.scene.origin, cfg.scene.falloff)
        mask = build_dense_mask(ri, cfg.sensor, cfg.camera, cfg.densify)
        clean = render_clean_range_image(scene, cfg.sensor, cfg.scene.origin)
        stem = args.out / f"{k:04d}"
        write_tensor(image.pixels, Path(f"{stem}{IMAGE_SUFFIX}"))
        write_tensor(mask.values, Path(f"{stem}{MASK_SUFFIX}"))
        write_tensor(range_image_to_tensor(ri), Path(f"{stem}{RANGE_SUFFIX}"))
        write_cloud(range_image_to_pointcloud(clean, cfg.sensor), Path(f"{stem}{CLEAN_SUFFIX}"))
        Path(f"{stem}{SCENE_SUFFIX}").write_text(format_scene(scene), encoding="utf-8")
        report(format_fields(frame=k, seed=seed, returns=int(ri.returns.sum())))


def cmd_sweep_noise(args: Namespace) -> None:
    pc = read_cloud(args.cloud)
    ps = args.probabilities or SWEEP_PROBABILITIES
    total = len(pc)
    for point in noise_sweep(pc, ps, args.seed):
        fraction = point.kept / total if total else 0.0
        report(format_fields(p=point.p, kept=point.kept, fraction=fraction))

