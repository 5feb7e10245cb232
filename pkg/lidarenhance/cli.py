#!/usr/bin/env python3
"""lidarenhance CLI entrypoint and stable wrappers."""

from __future__ import annotations

from argparse import Namespace

from lidarenhance import _commands
from lidarenhance._console import error
from lidarenhance._errors import LidarEnhanceError, UsageError
from lidarenhance._parser import USAGE_EXIT, build_parser

EXIT_OK = 0
EXIT_DATA = 2


def cmd_raycast(args: Namespace) -> None:
    """Render an appearance image and a range image from a scene."""
    _commands.cmd_raycast(args)


def cmd_densify(args: Namespace) -> None:
    """Turn a range image into a camera-aligned dense intensity mask."""
    _commands.cmd_densify(args)


def cmd_train(args: Namespace) -> None:
    _commands.cmd_train(args)


def cmd_predict(args: Namespace) -> None:
    _commands.cmd_predict(args)


def cmd_enhance(args: Namespace) -> None:
    """Apply a prediction and random raydrop to a clean cloud."""
    _commands.cmd_enhance(args)


def cmd_eval(args: Namespace) -> None:
    _commands.cmd_eval(args)


def cmd_viz(args: Namespace) -> None:
    _commands.cmd_viz(args)


def cmd_gen_dataset(args: Namespace) -> None:
    _commands.cmd_gen_dataset(args)


def cmd_sweep_noise(args: Namespace) -> None:
    _commands.cmd_sweep_noise(args)


def _dispatch_command(args: Namespace) -> int:
    """Run the selected handler and map failures to exit codes."""
    handlers = {
        "raycast": cmd_raycast,
        "densify": cmd_densify,
        "train": cmd_train,
        "predict": cmd_predict,
        "enhance": cmd_enhance,
        "eval": cmd_eval,
        "viz": cmd_viz,
        "gen-dataset": cmd_gen_dataset,
        "sweep-noise": cmd_sweep_noise,
    }
    handler = handlers[args.command]
    try:
        handler(args)
    except UsageError as exc:
        error(str(exc))
        return USAGE_EXIT
    except LidarEnhanceError as exc:
        error(str(exc))
        return EXIT_DATA
    except OSError as exc:
        target = f"{exc.filename}: " if exc.filename else ""
        error(f"{target}{exc.strerror or exc}")
        return EXIT_DATA
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT

    if args.command is None:
        parser.print_help()
        return USAGE_EXIT
    return _dispatch_command(args)


if __name__ == "__main__":
    raise SystemExit(main())
