"""Console helpers: colored prefixes for stderr and a stdout reporter."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from typing import TextIO

# ---------------------------------------------------------------------------
# ANSI color helpers (zero dependencies)
# Respects NO_COLOR (https://no-color.org/), TERM=dumb, and non-TTY streams.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsolePalette:
    """ANSI style fragments used for console prefixes."""

    yellow: str = "\033[33m"
    red: str = "\033[31m"
    reset: str = "\033[0m"


PALETTE = ConsolePalette()


def use_color(stream: TextIO | None = None) -> bool:
    """Return True when ANSI color codes should be emitted to *stream*."""
    if os.environ.get("NO_COLOR"):
        return False
    if os.environ.get("TERM") == "dumb":
        return False
    stream = stream or sys.stdout
    return hasattr(stream, "isatty") and stream.isatty()


def colorize(text: str, code: str, stream: TextIO | None = None) -> str:
    """Wrap *text* in an ANSI escape *code* if color is enabled for *stream*."""
    if use_color(stream):
        return f"{code}{text}{PALETTE.reset}"
    return text


def error(message: str) -> None:
    prefix = colorize("Error:", PALETTE.red, sys.stderr)
    print(f"{prefix} {message}", file=sys.stderr)


def warn(message: str) -> None:
    prefix = colorize("Warning:", PALETTE.yellow, sys.stderr)
    print(f"{prefix} {message}", file=sys.stderr)


def report(line: str) -> None:
    """Print one progress or result line to stdout."""
    print(line, flush=True)


def format_fields(**fields: object) -> str:
    """Render machine-readable ``key=value`` pairs separated by spaces."""
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)
