from __future__ import annotations

import numpy as np
import pytest

from playbook.codebook import build_histograms
from playbook.deeptree import DeepDecisionTree
from playbook.report import (
    EvaluationReport,
    format_relative,
    relative_color,
    render,
    sparkline,
)
from playbook.simulator import Mode, SimulationReport
from playbook.strategy import ScoredPlay, strategy_report
from playbook.trajectory import Dataset
from playbook.utils import label_color, make_console


def text_of(obj: object) -> str:
    return make_console(width=120, color_system=None).capture_text(render(obj))


def test_render_tree(tree: DeepDecisionTree) -> None:
    text = text_of(tree)

    assert f"Tree with {tree.n_leaves} leaves" in text
    assert "Role weights" in text
    assert "Leaves" in text


def test_render_playbook(tree: DeepDecisionTree, season: Dataset) -> None:
    playbook = build_histograms(tree, season)

    assert f"Playbook of {len(playbook)} elements" in text_of(playbook)


def test_render_strategy() -> None:
    scored = [ScoredPlay(0, 0.2, "A", "B"), ScoredPlay(1, 0.5, "B", "A")]

    text = text_of(strategy_report(scored, 2))

    assert "Relative offensive strategy" in text
    assert "Relative defensive strategy" in text
    assert "league: 0.20 0.50" in text


def test_render_evaluation() -> None:
    report = EvaluationReport((("baseline", 0.61), ("tree", 0.58)), 70, 30)

    text = text_of(report)

    assert "Short-term prediction (70 train / 30 test)" in text
    assert "0.5800" in text


def test_render_simulation() -> None:
    report = SimulationReport(rows=(), mse={Mode.BHM: 1.5, Mode.M1: 1.25})

    text = text_of(report)

    assert "Match simulation (0 matches)" in text
    assert "1.2500" in text


def test_render_falls_back_to_text() -> None:
    assert text_of(42).strip() == "42"


@pytest.mark.parametrize(
    "values, expected",
    [([0, 1], "▁█"), ([], ""), ([0, 0], "▁▁"), ([1, 2, 4], "▂▄█")],
)
def test_sparkline(values: list[float], expected: str) -> None:
    assert sparkline(values) == expected


def test_relative_color_saturates() -> None:
    assert relative_color(-1.0) == relative_color(-0.1)
    assert relative_color(1.0) == relative_color(0.1)
    assert relative_color(0.1) != relative_color(-0.1)
    assert relative_color(0.0).startswith("#")


def test_format_relative_marks_absent_elements() -> None:
    assert format_relative(np.nan) == "[dim]·[/]"


def test_label_colors_are_stable_hex_codes() -> None:
    assert label_color("T00") == label_color(" T00 ")
    assert label_color("T00") != label_color("T01")
    assert all(len(label_color(name)) == 7 for name in ("corner", "open_play"))
