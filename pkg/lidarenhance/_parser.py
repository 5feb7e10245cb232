"""Argument parser builder for the lidarenhance CLI."""

from __future__ import annotations

import argparse
import importlib.metadata
import math
import sys
from pathlib import Path

from lidarenhance._console import error
from lidarenhance._pipeline import EnhanceMode, OutOfFrustum

USAGE_EXIT = 1


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        error(message)
        self.exit(USAGE_EXIT)


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = _non_negative_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0.0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value >= 0.0):
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return value


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        metavar="PATH",
        type=Path,
        default=None,
        help="Run configuration file ([sensor], [camera], [noise], ...).",
    )


def _add_seed_arg(parser: argparse.ArgumentParser, help_text: str) -> None:
    parser.add_argument("--seed", type=_non_negative_int, default=None, help=help_text)


def build_parser() -> CliParser:
    parser = CliParser(
        prog="lidarenhance",
        description="Learn LiDAR raydrop and intensity from camera images and "
        "apply them to clean simulated point clouds.",
    )
    try:
        _version = importlib.metadata.version("lidarenhance")
    except importlib.metadata.PackageNotFoundError:
        _version = "dev"
    parser.add_argument("--version", action="version", version=_version)
    sub = parser.add_subparsers(dest="command")

    # lidarenhance raycast
    p_raycast = sub.add_parser(
        "raycast", help="Render an appearance image and range image from a scene."
    )
    _add_config_arg(p_raycast)
    p_raycast.add_argument("--scene", type=Path, help="Scene file (default: random scene).")
    p_raycast.add_argument(
        "--seed", type=_non_negative_int, default=0, help="Random scene seed (default: 0)."
    )
    p_raycast.add_argument("--out-image", type=Path, required=True, help="HxWx3 image tensor.")
    p_raycast.add_argument("--out-range", type=Path, required=True, help="2xRxC range tensor.")
    p_raycast.add_argument("--clean-out", type=Path, help="Clean raycast cloud (.bin).")
    p_raycast.add_argument("--preview", type=Path, help="PPM preview of the image.")

    # lidarenhance densify
    p_densify = sub.add_parser("densify", help="Build a dense intensity mask from a range image.")
    _add_config_arg(p_densify)
    p_densify.add_argument("--range", type=Path, required=True, help="2xRxC range tensor.")
    p_densify.add_argument("--out", type=Path, required=True, help="HxW mask tensor.")
    p_densify.add_argument("--depth-out", type=Path, help="HxW depth-buffer tensor.")
    p_densify.add_argument(
        "--sparse", action="store_true", help="Nearest-pixel projection without meshing."
    )
    p_densify.add_argument(
        "--guard-px", type=_non_negative_float, default=None, help="Vertex guard margin."
    )

    # lidarenhance train
    p_train = sub.add_parser("train", help="Train RinetLite on paired image/mask tensors.")
    _add_config_arg(p_train)
    p_train.add_argument(
        "--data", type=Path, required=True, help="Directory of *.image.rtns / *.mask.rtns."
    )
    p_train.add_argument("--out", type=Path, required=True, help="Weights file to write.")
    p_train.add_argument("--epochs", type=_non_negative_int, default=None)
    p_train.add_argument("--lr", type=_positive_float, default=None, help="Base learning rate.")
    p_train.add_argument("--batch-size", type=_positive_int, default=None)
    p_train.add_argument("--channels", type=_positive_int, default=None)
    p_train.add_argument("--blocks", type=_non_negative_int, default=None)
    _add_seed_arg(p_train, "Initialization and shuffling seed.")

    # lidarenhance predict
    p_predict = sub.add_parser("predict", help="Run a trained model on an image tensor.")
    p_predict.add_argument("--weights", type=Path, required=True)
    p_predict.add_argument("--image", type=Path, required=True, help="HxWx3 image tensor.")
    p_predict.add_argument("--out", type=Path, required=True, help="2xHxW prediction tensor.")

    # lidarenhance enhance
    p_enhance = sub.add_parser("enhance", help="Apply a prediction and random raydrop to a cloud.")
    _add_config_arg(p_enhance)
    p_enhance.add_argument("--cloud", type=Path, required=True, help="Clean cloud (.bin).")
    p_enhance.add_argument("--prediction", type=Path, help="2xHxW prediction or HxW mask.")
    p_enhance.add_argument("--out", type=Path, required=True, help="Enhanced cloud (.bin).")
    p_enhance.add_argument("--range-out", type=Path, help="Also write the 2xRxC range tensor.")
    p_enhance.add_argument("--noise-p", type=_probability, default=None, help="Drop probability.")
    _add_seed_arg(p_enhance, "Random raydrop seed.")
    p_enhance.add_argument("--threshold", type=_probability, default=None)
    p_enhance.add_argument("--mode", choices=[m.value for m in EnhanceMode], default=None)
    p_enhance.add_argument(
        "--out-of-frustum", choices=[p.value for p in OutOfFrustum], default=None
    )

    # lidarenhance eval
    p_eval = sub.add_parser("eval", help="Score a prediction against a ground-truth mask.")
    p_eval.add_argument("--prediction", type=Path, required=True, help="2xHxW or HxW tensor.")
    p_eval.add_argument("--truth", type=Path, required=True, help="HxW mask tensor.")
    p_eval.add_argument("--threshold", type=_probability, default=0.5)

    # lidarenhance viz
    p_viz = sub.add_parser("viz", help="Write a tensor as a PGM (or PPM) preview.")
    p_viz.add_argument("--tensor", type=Path, required=True)
    p_viz.add_argument("--out", type=Path, required=True)
    p_viz.add_argument(
        "--channel", type=_non_negative_int, default=None, help="Plane of a 3-D tensor."
    )
    p_viz.add_argument(
        "--normalize", action="store_true", help="Divide by the maximum before writing."
    )

    # lidarenhance gen-dataset
    p_gen = sub.add_parser(
        "gen-dataset", help="Render paired image/mask fixtures from random scenes."
    )
    _add_config_arg(p_gen)
    p_gen.add_argument("--out", type=Path, required=True, help="Output directory.")
    p_gen.add_argument("--count", type=_positive_int, required=True, help="Number of frames.")
    p_gen.add_argument(
        "--seed", type=_non_negative_int, default=0, help="Seed of frame 0; frame k uses seed + k."
    )

    # lidarenhance sweep-noise
    p_sweep = sub.add_parser("sweep-noise", help="Count points kept across drop probabilities.")
    p_sweep.add_argument("--cloud", type=Path, required=True)
    p_sweep.add_argument("--p", type=_probability, nargs="+", default=None, dest="probabilities")
    p_sweep.add_argument("--seed", type=_non_negative_int, default=0)

    return parser
