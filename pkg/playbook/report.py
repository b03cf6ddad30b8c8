"""Terminal rendering of results, dispatched on the result type."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Any

import numpy as np
from multimethod import multimethod
from rich.console import Group, RenderableType
from rich.text import Text

from .codebook import Playbook
from .deeptree import DeepDecisionTree
from .simulator import SimulationReport
from .strategy import Side, StrategyDistribution, StrategyReport
from .trajectory import PLAY_TYPES
from .utils import border_panel, density_bar, format_label, new_table, wrap

if TYPE_CHECKING:
    from collections.abc import Sequence

    from coloraide import Color

SPARK = "▁▂▃▄▅▆▇█"
RELATIVE_SCALE = 0.1


@dataclass(frozen=True)
class EvaluationReport:
    """Mean log loss per experiment on one held-out split."""

    rows: tuple[tuple[str, float], ...]
    n_train: int = 0
    n_test: int = 0


@lru_cache
def _diverging() -> Any:
    from coloraide import Color

    return Color.interpolate(["#d7301f", "#f0f0f0", "#1a9850"], space="oklab")


@lru_cache
def relative_color(value: float) -> str:
    """Red below zero, green above; saturates at +-RELATIVE_SCALE."""
    t = 0.5 + 0.5 * float(np.clip(value / RELATIVE_SCALE, -1, 1))
    color: Color = _diverging()(t)
    return color.convert("srgb").fit().to_string(hex=True)


def sparkline(values: Sequence[float]) -> str:
    top = max(values, default=0) or 1
    last = len(SPARK) - 1
    return "".join(SPARK[min(int(v / top * last), last)] for v in values)


def format_relative(value: float) -> str:
    if np.isnan(value):
        return wrap("·", "dim")
    return wrap("■", relative_color(round(value, 3)))


@multimethod
def render(obj: object) -> RenderableType:
    return Text(str(obj))


@render.register
def _(tree: DeepDecisionTree) -> RenderableType:
    alpha = tree.alpha()
    types = [t for t in PLAY_TYPES if t in alpha]
    weights = new_table("role", *(t.value for t in types), title="Role weights")
    for role in range(tree.n_agents):
        cells = []
        for t in types:
            value = alpha[t][role]
            text = f"{value:.3f}"
            strongest = role == int(np.argmax(alpha[t]))
            cells.append(wrap(text, "b green") if strongest else text)
        weights.add_row(str(role), *cells)

    leaves = new_table("play type", "leaves", "plays", "final loss", title="Leaves")
    for t in types:
        branch_leaves = [leaf for leaf in tree.leaves if leaf.play_type is t]
        losses = [r.loss for r in tree.loss_trace if r.play_type == t.value]
        leaves.add_row(
            format_label(t.value),
            str(len(branch_leaves)),
            str(sum(leaf.assigned_count for leaf in branch_leaves)),
            f"{losses[-1]:.5f}" if losses else "-",
        )
    parts: list[RenderableType] = [weights, leaves]
    if tree.stopped_early:
        stopped = ", ".join(tree.stopped_early)
        parts.append(Text(f"stopped early: {stopped}", style="yellow"))
    return border_panel(Group(*parts), title=f"Tree with {tree.n_leaves} leaves")


@render.register
def _(playbook: Playbook) -> RenderableType:
    largest = max((e.member_count for e in playbook.elements), default=0)
    table = new_table("element", "play type", "plays", "", "mean xG", "xG histogram")
    centres = (playbook.spec.edges[:-1] + playbook.spec.edges[1:]) / 2
    for element in playbook.elements:
        mean = (
            f"{element.counts @ centres / element.member_count:.3f}"
            if element.member_count
            else "-"
        )
        table.add_row(
            str(element.id),
            format_label(element.play_type.value),
            str(element.member_count),
            density_bar(element.member_count, largest),
            mean,
            sparkline(element.density.tolist()),
        )
    return border_panel(table, title=f"Playbook of {len(playbook)} elements")


def _strategy_table(
    relative: Sequence[StrategyDistribution], league: StrategyDistribution
) -> RenderableType:
    table = new_table("team", "shots", "strongest", "weakest", "relative by element")
    for dist in relative:
        supported = np.flatnonzero(dist.supported)
        best = worst = "-"
        if len(supported):
            best = str(supported[np.argmax(dist.values[supported])])
            worst = str(supported[np.argmin(dist.values[supported])])
        table.add_row(
            format_label(dist.team),
            str(int(dist.shots.sum())),
            best,
            worst,
            "".join(format_relative(v) for v in dist.values),
        )
    league_values = " ".join(
        "-" if np.isnan(v) else f"{v:.2f}" for v in league.values
    )
    return Group(Text(f"league: {league_values}", style="dim"), table)


@render.register
def _(report: StrategyReport) -> RenderableType:
    panels = []
    for side in Side:
        relative = [d for (_, s), d in report.relative.items() if s is side]
        panels.append(
            border_panel(
                _strategy_table(relative, report.league[side]),
                title=f"Relative {side.value} strategy",
            )
        )
    return Group(*panels)


@render.register
def _(report: EvaluationReport) -> RenderableType:
    best = min((loss for _, loss in report.rows), default=None)
    table = new_table("experiment", "mean log loss")
    for name, loss in report.rows:
        text = f"{loss:.4f}"
        table.add_row(name, wrap(text, "b green") if loss == best else text)
    split = f"{report.n_train} train / {report.n_test} test"
    return border_panel(table, title=f"Short-term prediction ({split})")


@render.register
def _(report: SimulationReport) -> RenderableType:
    best = min(report.mse.values(), default=None)
    table = new_table("model", "mean squared error")
    for mode, value in report.mse.items():
        text = f"{value:.4f}"
        table.add_row(mode.value, wrap(text, "b green") if value == best else text)
    n_matches = len(report.rows) // max(len(report.mse), 1)
    return border_panel(table, title=f"Match simulation ({n_matches} matches)")
