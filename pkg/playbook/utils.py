from __future__ import annotations

import logging
import os
import zlib
from datetime import timedelta
from functools import lru_cache
from typing import TYPE_CHECKING, Any, SupportsFloat

import humanize
import platformdirs
from rich import box
from rich.bar import Bar
from rich.console import Console, RenderableType
from rich.errors import MarkupError
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text
from rich.theme import Theme

if TYPE_CHECKING:
    from collections.abc import Iterable

JSONDict = dict[str, Any]

LOGGER_NAME = "playbook"
LABEL_LIGHTNESS = 0.72
LABEL_CHROMA = 0.13


def wrap(text: Any, tag: str) -> str:
    return f"[{tag}]{text}[/]"


def human_duration(seconds: SupportsFloat) -> str:
    return humanize.naturaldelta(
        timedelta(seconds=float(seconds)), minimum_unit="milliseconds"
    )


def get_theme() -> Theme | None:
    config_path = platformdirs.user_config_path("rich") / "config.ini"
    return Theme.read(str(config_path)) if config_path.exists() else None


class SafeConsole(Console):
    """Console that prints team names with square brackets verbatim."""

    def render_str(self, text: str, **kwargs: Any) -> Text:
        try:
            return super().render_str(text, **kwargs)
        except MarkupError:
            kwargs["markup"] = False
            return super().render_str(text, **kwargs)

    def capture_text(self, *args: Any, **kwargs: Any) -> str:
        with self.capture() as capture:
            self.print(*args, **kwargs)
        return capture.get()


def make_console(**kwargs: Any) -> SafeConsole:
    kwargs.setdefault("theme", get_theme())
    kwargs.setdefault("record", True)
    return SafeConsole(**kwargs)


console = make_console()


def get_logger() -> logging.Logger:
    """Return the package logger, attaching the rich handler on first use."""
    log = logging.getLogger(LOGGER_NAME)
    if not log.handlers:
        handler = RichHandler(
            console=make_console(stderr=True, record=False),
            tracebacks_show_locals=True,
            omit_repeated_times=False,
            show_time=True,
        )
        log.addHandler(handler)
        log.setLevel("DEBUG" if os.getenv("DEBUG") else "INFO")
    return log


def set_verbose(verbose: bool) -> None:
    if verbose:
        get_logger().setLevel("DEBUG")


def new_table(
    *headers: str, rows: Iterable[Iterable[RenderableType]] | None = None, **kwargs: Any
) -> Table:
    kwargs.setdefault("box", box.SIMPLE_HEAVY)
    kwargs.setdefault("show_edge", False)
    kwargs.setdefault("pad_edge", False)
    kwargs.setdefault("title_justify", "left")
    kwargs.setdefault("header_style", "b")

    table = Table(*headers, **kwargs)
    # numbers stay right aligned next to their headers
    for column in table.columns[1:]:
        column.justify = "right"
    for row in rows or ():
        table.add_row(*row)
    return table


def border_panel(content: RenderableType, **kwargs: Any) -> Panel:
    if "title" in kwargs:
        kwargs["title"] = wrap(kwargs["title"], "b")
    kwargs.setdefault("title_align", "left")
    kwargs.setdefault("box", box.SQUARE)
    kwargs.setdefault("border_style", "dim")
    kwargs.setdefault("expand", False)
    return Panel(content, **kwargs)


@lru_cache
def label_color(name: str) -> str:
    """A stable colour per team or play type name, equally bright for all."""
    from coloraide import Color

    hue = zlib.crc32(name.strip().encode()) % 360
    color = Color("oklch", [LABEL_LIGHTNESS, LABEL_CHROMA, hue])
    return color.convert("srgb").fit().to_string(hex=True)


def format_label(name: str) -> str:
    return wrap(name, f"b {label_color(name)}")


def density_bar(value: float, maximum: float, width: int = 20) -> Bar:
    """Horizontal bar of ``value`` on a ``[0, maximum]`` scale."""
    end = min(value, maximum) if maximum else 0.0
    return Bar(size=maximum or 1.0, begin=0, end=end, width=width, color="cyan")
