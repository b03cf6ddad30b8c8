"""Offensive and defensive strategy distributions over the playbook.

A distribution holds, per codebook element, the mean expected-goal value of the
shots behind it. Elements a team never shot from (or conceded from) are absent,
stored as NaN, which is different from a value of zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from .deeptree import DeepDecisionTree, predict
from .errors import IncompatibleDistributionsError, UnknownTeamError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from .trajectory import Dataset

log = logging.getLogger(__name__)

LEAGUE = "LEAGUE"
STRATEGY_CSV = "strategy.csv"


class Side(str, Enum):
    OFFENSIVE = "offensive"
    DEFENSIVE = "defensive"


@dataclass(frozen=True)
class ScoredPlay:
    element: int
    score: float
    attacking_team: str
    defending_team: str
    match_id: str = ""

    def team(self, side: Side) -> str:
        return self.attacking_team if side is Side.OFFENSIVE else self.defending_team


@dataclass(frozen=True, eq=False)
class StrategyDistribution:
    values: np.ndarray
    shots: np.ndarray
    side: Side
    team: str = LEAGUE
    relative: bool = False

    @property
    def supported(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def value(self, element: int, default: float = np.nan) -> float:
        value = float(self.values[element])
        return default if np.isnan(value) else value


def score_plays(
    tree: DeepDecisionTree, dataset: Dataset, use_outcome: bool = False
) -> list[ScoredPlay]:
    """Element and score per play: the leaf's goal probability or the actual outcome."""
    elements, probs = predict(tree, dataset)
    scores = dataset.labels.astype(float) if use_outcome else probs
    return [
        ScoredPlay(int(e), float(s), p.attacking_team, p.defending_team, p.match_id)
        for e, s, p in zip(elements, scores, dataset)
    ]


def _n_elements(scored: Sequence[ScoredPlay], n_elements: int | None) -> int:
    if n_elements is not None:
        return n_elements
    return max((s.element for s in scored), default=-1) + 1


def _distribution(
    scored: Sequence[ScoredPlay], side: Side, team: str, n_elements: int
) -> StrategyDistribution:
    elements = np.array([s.element for s in scored], dtype=int)
    scores = np.array([s.score for s in scored], dtype=float)
    shots = np.bincount(elements, minlength=n_elements)
    sums = np.bincount(elements, weights=scores, minlength=n_elements)
    values = np.where(shots > 0, sums / np.maximum(shots, 1), np.nan)
    return StrategyDistribution(values, shots, side, team)


def mean_strategy(
    scored_plays: Sequence[ScoredPlay], side: Side, n_elements: int | None = None
) -> StrategyDistribution:
    """League average per element; identical for both sides but labelled by one."""
    n_elements = _n_elements(scored_plays, n_elements)
    return _distribution(scored_plays, side, LEAGUE, n_elements)


def teams_of(scored_plays: Sequence[ScoredPlay]) -> list[str]:
    teams = {s.attacking_team for s in scored_plays}
    return sorted(teams | {s.defending_team for s in scored_plays})


def team_strategy(
    scored_plays: Sequence[ScoredPlay],
    team: str,
    side: Side,
    n_elements: int | None = None,
) -> StrategyDistribution:
    """Plays the team attacked in (offensive) or defended against (defensive)."""
    if team not in teams_of(scored_plays):
        raise UnknownTeamError(f"team {team!r} has no plays")
    n_elements = _n_elements(scored_plays, n_elements)
    own = [s for s in scored_plays if s.team(side) == team]
    return _distribution(own, side, team, n_elements)


def relative_strategy(
    team_dist: StrategyDistribution, mean_dist: StrategyDistribution
) -> StrategyDistribution:
    if team_dist.side is not mean_dist.side:
        raise IncompatibleDistributionsError(
            f"sides differ: {team_dist.side.value} and {mean_dist.side.value}"
        )
    if len(team_dist) != len(mean_dist):
        raise IncompatibleDistributionsError(
            f"codebook sizes differ: {len(team_dist)} and {len(mean_dist)}"
        )
    return StrategyDistribution(
        team_dist.values - mean_dist.values,
        team_dist.shots,
        team_dist.side,
        team_dist.team,
        relative=True,
    )


def shot_frequency(
    scored_plays: Sequence[ScoredPlay], n_elements: int | None = None
) -> np.ndarray:
    n_elements = _n_elements(scored_plays, n_elements)
    elements = np.array([s.element for s in scored_plays], dtype=int)
    return np.bincount(elements, minlength=n_elements)


@dataclass(frozen=True, eq=False)
class StrategyReport:
    league: dict[Side, StrategyDistribution]
    teams: dict[tuple[str, Side], StrategyDistribution] = field(default_factory=dict)
    relative: dict[tuple[str, Side], StrategyDistribution] = field(default_factory=dict)

    @property
    def distributions(self) -> list[StrategyDistribution]:
        return [*self.league.values(), *self.teams.values(), *self.relative.values()]


def strategy_report(
    scored_plays: Sequence[ScoredPlay], n_elements: int
) -> StrategyReport:
    """League, per-team and relative distributions for both sides."""
    league = {side: mean_strategy(scored_plays, side, n_elements) for side in Side}
    teams = {
        (team, side): team_strategy(scored_plays, team, side, n_elements)
        for team in teams_of(scored_plays)
        for side in Side
    }
    relative = {
        key: relative_strategy(dist, league[key[1]]) for key, dist in teams.items()
    }
    log.info("Strategy distributions for %d teams", len(teams) // len(Side))
    return StrategyReport(league, teams, relative)


def export_strategy(
    distributions: Iterable[StrategyDistribution], path: str | Path
) -> Path:
    """One row per (distribution, element); absent values are left empty."""
    path = Path(path)
    if path.suffix != ".csv":
        path = path / STRATEGY_CSV
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["team", "side", "kind", "element", "value", "shots", "supported"]
    frame = pd.DataFrame(
        [
            {
                "team": dist.team,
                "side": dist.side.value,
                "kind": "relative" if dist.relative else "absolute",
                "element": element,
                "value": value,
                "shots": int(shots),
                "supported": bool(supported),
            }
            for dist in distributions
            for element, (value, shots, supported) in enumerate(
                zip(dist.values, dist.shots, dist.supported)
            )
        ],
        columns=columns,
    )
    frame.to_csv(path, index=False)
    return path
