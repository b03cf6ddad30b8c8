"""Season-level score prediction: the Poisson baseline and shot-by-shot simulation.

Two simulators share one event loop. Both draw each team's waiting time to its
next shot from a regression on past inter-arrival times, sample the shot's
playbook element from the team's own shot mix and convert it with the team's
strategy values. ``M1`` keeps the kickoff waiting-time means for the whole match;
``Context`` recomputes them from home/away, score and remaining time after
every shot.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from operator import attrgetter
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .deeptree import DeepDecisionTree, predict
from .errors import (
    DimensionError,
    DisconnectedScheduleError,
    EmptyDatasetError,
    InsufficientDataError,
    InvalidConfigError,
    NotFittedError,
    SchemaError,
    UnknownTeamError,
)
from .strategy import (
    Side,
    StrategyDistribution,
    mean_strategy,
    relative_strategy,
    score_plays,
    shot_frequency,
    team_strategy,
    teams_of,
)
from .trajectory import MATCH_LENGTH_S, MAX_STOPPAGE_S, Dataset, Fixture

if TYPE_CHECKING:
    from collections.abc import Sequence

log = logging.getLogger(__name__)

POISSON_L2 = 1e-3
RIDGE_L2 = 1e-6
MIN_GAP_S = 1.0
MIN_GAPS_PER_TEAM = 10
GOAL_PROB_RANGE = (0.01, 0.99)
CONTEXT_FEATURES = ("is_home", "goal_difference", "remaining_fraction")
MATCHES_CSV = "simulation_matches.csv"
SUMMARY_CSV = "simulation_summary.csv"


class Mode(str, Enum):
    BHM = "BHM"
    M1 = "M1"
    CONTEXT = "Context"


@dataclass(frozen=True)
class ShotEvent:
    time_s: float
    team: str
    element: int
    goal: int


@dataclass(frozen=True)
class MatchResult:
    match_id: str
    home_team: str
    away_team: str
    goals: tuple[int, int]
    # None when only the final score is known
    shots: Optional[tuple[ShotEvent, ...]] = None
    stoppage_s: float = 0.0

    def __post_init__(self) -> None:
        if len(self.goals) != 2 or min(self.goals) < 0:
            raise SchemaError(f"{self.match_id}: goals must be two non-negative counts")
        if self.shots is None:
            return
        scored = Counter(s.team for s in self.shots if s.goal)
        if (scored[self.home_team], scored[self.away_team]) != tuple(self.goals):
            raise SchemaError(f"{self.match_id}: goals disagree with the shots")

    def side(self, team: str) -> int:
        return 0 if team == self.home_team else 1


def _fixtures(dataset: Dataset) -> tuple[Fixture, ...]:
    if dataset.fixtures:
        return dataset.fixtures
    teams: dict[str, tuple[str, str]] = {}
    for play in dataset:
        home, away = play.attacking_team, play.defending_team
        if not play.is_home:
            home, away = away, home
        teams.setdefault(play.match_id, (home, away))
    return tuple(Fixture(m, *teams[m]) for m in sorted(teams))


def match_results(
    dataset: Dataset, tree: DeepDecisionTree | None = None
) -> list[MatchResult]:
    """Per-fixture score and shot sequence; elements are -1 without a tree."""
    if tree is None:
        elements = np.full(len(dataset), -1)
    else:
        elements = predict(tree, dataset)[0]
    shots: dict[str, list[ShotEvent]] = {}
    for play, element in zip(dataset, elements):
        event = ShotEvent(
            play.shot_clock_s, play.attacking_team, int(element), play.label
        )
        shots.setdefault(play.match_id, []).append(event)

    results = []
    for fixture in _fixtures(dataset):
        events = sorted(shots.get(fixture.match_id, ()), key=attrgetter("time_s"))
        goals = Counter(s.team for s in events if s.goal)
        results.append(
            MatchResult(
                fixture.match_id,
                fixture.home_team,
                fixture.away_team,
                (goals[fixture.home_team], goals[fixture.away_team]),
                tuple(events),
                fixture.stoppage_s,
            )
        )
    return results


def _team_index(teams: Sequence[str], team: str) -> int:
    try:
        return teams.index(team)
    except ValueError:
        raise UnknownTeamError(f"unknown team {team!r}") from None


@dataclass(frozen=True, eq=False)
class PoissonSeasonModel:
    """Log-linear goal rates with home advantage, attack and defence effects.

    ``log rate_home = home + att[h] + def[a]``; ``log rate_away = att[a] + def[h]``.
    """

    teams: tuple[str, ...]
    home: float
    att: np.ndarray
    defence: np.ndarray
    gradient_norm: float = 0.0

    def rates(self, home_team: str, away_team: str) -> tuple[float, float]:
        h = _team_index(self.teams, home_team)
        a = _team_index(self.teams, away_team)
        return (
            float(np.exp(self.home + self.att[h] + self.defence[a])),
            float(np.exp(self.att[a] + self.defence[h])),
        )


def _check_connected(teams: Sequence[str], results: Sequence[MatchResult]) -> None:
    index = {t: i for i, t in enumerate(teams)}
    rows = [index[r.home_team] for r in results]
    cols = [index[r.away_team] for r in results]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(teams),) * 2)
    n_components, labels = connected_components(graph, directed=False)
    if n_components > 1:
        groups = [
            [t for t, c in zip(teams, labels) if c == k] for k in range(n_components)
        ]
        raise DisconnectedScheduleError(
            f"schedule splits into {n_components} groups that never meet: {groups}"
        )


def _sum_to_zero_basis(n_teams: int) -> np.ndarray:
    """Map ``[home, att[:-1], def[:-1]]`` onto ``[home, att, def]``; blocks sum to 0."""
    free = n_teams - 1
    basis = np.zeros((1 + 2 * n_teams, 1 + 2 * free))
    basis[0, 0] = 1.0
    for block in range(2):
        rows = 1 + block * n_teams
        cols = 1 + block * free
        basis[rows : rows + free, cols : cols + free] = np.eye(free)
        basis[rows + free, cols : cols + free] = -1.0
    return basis


def fit_poisson(
    results: Sequence[MatchResult],
    l2: float = POISSON_L2,
    initial: np.ndarray | None = None,
) -> PoissonSeasonModel:
    """Penalised maximum likelihood for home, attack and defence effects."""
    if not results:
        raise EmptyDatasetError("cannot fit a season model without matches")
    teams = sorted({r.home_team for r in results} | {r.away_team for r in results})
    _check_connected(teams, results)

    n = len(teams)
    index = {t: i for i, t in enumerate(teams)}
    design = np.zeros((2 * len(results), 1 + 2 * n))
    goals = np.zeros(2 * len(results))
    for row, result in enumerate(results):
        h, a = index[result.home_team], index[result.away_team]
        design[2 * row, [0, 1 + h, 1 + n + a]] = 1.0
        design[2 * row + 1, [1 + a, 1 + n + h]] = 1.0
        goals[2 * row : 2 * row + 2] = result.goals

    basis = _sum_to_zero_basis(n)
    features = design @ basis
    penalty = l2 * basis[1:].T @ basis[1:]

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        eta = features @ z
        rate = np.exp(eta)
        value = rate.sum() - goals @ eta + 0.5 * z @ penalty @ z
        return float(value), features.T @ (rate - goals) + penalty @ z

    start = np.zeros(features.shape[1]) if initial is None else np.asarray(initial)
    fit = minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 10_000, "ftol": 1e-15, "gtol": 1e-10},
    )
    z = fit.x
    # Newton polish: the objective is strictly convex
    for _ in range(20):
        _, grad = objective(z)
        if np.linalg.norm(grad) < 1e-10:
            break
        rate = np.exp(features @ z)
        hessian = features.T @ (rate[:, None] * features) + penalty
        z = z - np.linalg.solve(hessian, grad)

    grad_norm = float(np.linalg.norm(objective(z)[1]))
    params = basis @ z
    log.info("Poisson season model: %d teams, gradient norm %.2e", n, grad_norm)
    return PoissonSeasonModel(
        tuple(teams), float(params[0]), params[1 : 1 + n], params[1 + n :], grad_norm
    )


@dataclass(frozen=True)
class SimulationConfig:
    n_runs: int = 1000
    match_length_s: float = MATCH_LENGTH_S
    max_stoppage_s: float = MAX_STOPPAGE_S
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise InvalidConfigError("n_runs must be at least 1")
        if self.match_length_s <= 0 or self.max_stoppage_s < 0:
            raise InvalidConfigError("match and stoppage lengths out of range")


@dataclass(frozen=True, eq=False)
class ScorePrediction:
    home_team: str
    away_team: str
    mode: Mode
    scores: np.ndarray
    rates: Optional[tuple[float, float]] = None

    @property
    def expected(self) -> tuple[float, float]:
        home, away = self.scores.mean(axis=0)
        return float(home), float(away)


def simulate_bhm(
    model: PoissonSeasonModel, home: str, away: str, config: SimulationConfig
) -> ScorePrediction:
    rates = model.rates(home, away)
    rng = np.random.default_rng(config.rng_seed)
    scores = rng.poisson(rates, size=(config.n_runs, 2))
    return ScorePrediction(home, away, Mode.BHM, scores, rates)


@dataclass(frozen=True, eq=False)
class ShotClockModel:
    """Linear model of the waiting time (s) until a team's next shot."""

    teams: tuple[str, ...]
    weights: np.ndarray
    with_context: bool

    @property
    def feature_names(self) -> tuple[str, ...]:
        return (
            "intercept",
            *(f"team[{t}]" for t in self.teams[1:]),
            *(f"opponent[{t}]" for t in self.teams[1:]),
            *(CONTEXT_FEATURES if self.with_context else ()),
        )

    def row(
        self,
        team: str,
        opponent: str,
        is_home: bool,
        goal_difference: int,
        remaining_fraction: float,
    ) -> np.ndarray:
        n = len(self.teams)
        features = np.zeros(2 * n - 1 + 3 * self.with_context)
        features[0] = 1.0
        if t := _team_index(self.teams, team):
            features[t] = 1.0
        if o := _team_index(self.teams, opponent):
            features[n - 1 + o] = 1.0
        if self.with_context:
            context = (float(is_home), goal_difference, remaining_fraction)
            features[2 * n - 1 :] = context
        return features

    def mean_gap(
        self,
        team: str,
        opponent: str,
        is_home: bool,
        goal_difference: int,
        remaining_fraction: float,
    ) -> float:
        """Predicted waiting time, never below one second."""
        row = self.row(team, opponent, is_home, goal_difference, remaining_fraction)
        return max(MIN_GAP_S, float(row @ self.weights))


def _gap_observations(
    results: Sequence[MatchResult], match_length_s: float
) -> list[tuple[str, str, bool, int, float, float]]:
    """``(team, opponent, is_home, goal_difference, remaining_fraction, gap)`` rows.

    Each team's gaps run between its consecutive shots, the first from kickoff;
    features describe the state when the gap starts.
    """
    rows = []
    for result in results:
        teams = (result.home_team, result.away_team)
        score = [0, 0]
        gap_start = [(0.0, 0, 1.0), (0.0, 0, 1.0)]
        for shot in result.shots or ():
            side = result.side(shot.team)
            start, difference, remaining = gap_start[side]
            gap = shot.time_s - start
            rows.append(
                (teams[side], teams[1 - side], side == 0, difference, remaining, gap)
            )
            score[side] += shot.goal
            remaining = max(0.0, 1.0 - shot.time_s / match_length_s)
            gap_start[side] = (shot.time_s, score[side] - score[1 - side], remaining)
    return rows


def fit_shot_clock(
    data: Union[Dataset, Sequence[MatchResult]],
    with_context: bool,
    match_length_s: float = MATCH_LENGTH_S,
) -> ShotClockModel:
    """Ordinary least squares on inter-arrival seconds; ridge when rank deficient."""
    results = match_results(data) if isinstance(data, Dataset) else list(data)
    observations = _gap_observations(results, match_length_s)
    teams = tuple(sorted({t for r in results for t in (r.home_team, r.away_team)}))
    counts = Counter(obs[0] for obs in observations)
    if short := [t for t in teams if counts[t] < MIN_GAPS_PER_TEAM]:
        raise InsufficientDataError(
            f"fewer than {MIN_GAPS_PER_TEAM} shot gaps for {', '.join(short)}"
        )

    template = ShotClockModel(teams, np.zeros(0), with_context)
    design = np.stack([template.row(*obs[:5]) for obs in observations])
    target = np.array([obs[5] for obs in observations])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        log.warning("Shot-clock design is rank deficient, using ridge %.0e", RIDGE_L2)
        gram = design.T @ design + RIDGE_L2 * np.eye(design.shape[1])
        weights = np.linalg.solve(gram, design.T @ target)
    else:
        weights = np.linalg.lstsq(design, target, rcond=None)[0]
    log.info(
        "Shot clock (%s context) from %d gaps",
        "with" if with_context else "without",
        len(target),
    )
    return ShotClockModel(teams, weights, with_context)


@dataclass(frozen=True, eq=False)
class SimulationModels:
    clock_m1: ShotClockModel
    clock_context: ShotClockModel
    league: StrategyDistribution
    offence: dict[str, StrategyDistribution]
    defence_relative: dict[str, StrategyDistribution]
    shot_mix: dict[str, np.ndarray]
    poisson: Optional[PoissonSeasonModel] = None
    _cdfs: dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def check_team(self, team: str) -> None:
        if team not in self.shot_mix:
            raise UnknownTeamError(f"no simulation model for team {team!r}")

    def element_cdf(self, team: str) -> np.ndarray:
        if team not in self._cdfs:
            mix = self.shot_mix[team].astype(float)
            self._cdfs[team] = np.cumsum(mix) / mix.sum()
        return self._cdfs[team]

    def goal_probability(self, team: str, opponent: str, element: int) -> float:
        """Team value (league value when absent) plus opponent relative defence."""
        value = self.offence[team].value(element, self.league.value(element, 0.0))
        if value == 0:
            return 0.0
        value += self.defence_relative[opponent].value(element, 0.0)
        return float(np.clip(value, *GOAL_PROB_RANGE))

    def clock(self, mode: Mode) -> ShotClockModel:
        return self.clock_context if mode is Mode.CONTEXT else self.clock_m1


def build_models(
    dataset: Dataset, tree: DeepDecisionTree, config: SimulationConfig | None = None
) -> SimulationModels:
    """Fit every model the simulators need from one (training) dataset."""
    config = config or SimulationConfig()
    scored = score_plays(tree, dataset)
    n = tree.n_leaves
    league_defence = mean_strategy(scored, Side.DEFENSIVE, n)
    league_mix = shot_frequency(scored, n)
    shot_mix = {}
    for team in teams_of(scored):
        mix = shot_frequency([s for s in scored if s.attacking_team == team], n)
        shot_mix[team] = mix if mix.sum() else league_mix

    results = match_results(dataset, tree)
    return SimulationModels(
        clock_m1=fit_shot_clock(results, False, config.match_length_s),
        clock_context=fit_shot_clock(results, True, config.match_length_s),
        league=mean_strategy(scored, Side.OFFENSIVE, n),
        offence={t: team_strategy(scored, t, Side.OFFENSIVE, n) for t in shot_mix},
        defence_relative={
            t: relative_strategy(
                team_strategy(scored, t, Side.DEFENSIVE, n), league_defence
            )
            for t in shot_mix
        },
        shot_mix=shot_mix,
        poisson=fit_poisson(results),
    )


def _simulate_run(
    models: SimulationModels,
    teams: tuple[str, str],
    config: SimulationConfig,
    mode: Mode,
    rng: np.random.Generator,
) -> tuple[int, int]:
    clock_model = models.clock(mode)
    end = config.match_length_s + rng.uniform(0, config.max_stoppage_s)
    cdfs = [models.element_cdf(t) for t in teams]
    score = [0, 0]
    clock = 0.0

    def mean_gap(side: int) -> float:
        remaining = max(0.0, 1.0 - clock / config.match_length_s)
        return clock_model.mean_gap(
            teams[side],
            teams[1 - side],
            side == 0,
            score[side] - score[1 - side],
            remaining,
        )

    kickoff = [mean_gap(0), mean_gap(1)]
    next_shot = [rng.exponential(kickoff[0]), rng.exponential(kickoff[1])]
    while True:
        side = 0 if next_shot[0] <= next_shot[1] else 1
        clock = next_shot[side]
        if clock > end:
            return score[0], score[1]
        element = int(np.searchsorted(cdfs[side], rng.random(), side="right"))
        element = min(element, len(cdfs[side]) - 1)
        opponent = teams[1 - side]
        if rng.random() < models.goal_probability(teams[side], opponent, element):
            score[side] += 1
        if mode is Mode.CONTEXT:
            next_shot = [clock + rng.exponential(mean_gap(s)) for s in (0, 1)]
        else:
            next_shot[side] = clock + rng.exponential(kickoff[side])


def simulate_match(
    models: SimulationModels | None,
    home: str,
    away: str,
    config: SimulationConfig,
    mode: Mode,
) -> ScorePrediction:
    """Average of ``n_runs`` simulated matches; run ``i`` is seeded by ``(seed, i)``."""
    if models is None:
        raise NotFittedError("simulation models have not been built")
    if mode is Mode.BHM:
        if models.poisson is None:
            raise NotFittedError("no Poisson season model in the simulation models")
        return simulate_bhm(models.poisson, home, away, config)
    models.check_team(home)
    models.check_team(away)
    seed = config.rng_seed
    scores = np.array(
        [
            _simulate_run(
                models, (home, away), config, mode, np.random.default_rng([seed, run])
            )
            for run in range(config.n_runs)
        ]
    )
    return ScorePrediction(home, away, mode, scores)


def evaluate_mse(
    predictions: Sequence[Sequence[float]] | np.ndarray,
    truths: Sequence[Sequence[float]] | np.ndarray,
) -> float:
    """Mean over matches of the squared error averaged over home and away goals."""
    predicted = np.asarray(predictions, dtype=float).reshape(-1, 2)
    actual = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(predicted) != len(actual):
        raise DimensionError(f"{len(predicted)} predictions for {len(actual)} matches")
    if not len(actual):
        raise EmptyDatasetError("no matches to evaluate")
    return float(np.mean((predicted - actual) ** 2))


@dataclass(frozen=True)
class SimulationRow:
    match_id: str
    home_team: str
    away_team: str
    mode: str
    predicted_home: float
    predicted_away: float
    truth_home: int
    truth_away: int


@dataclass(frozen=True, eq=False)
class SimulationReport:
    rows: tuple[SimulationRow, ...]
    mse: dict[Mode, float]


def evaluate_schedule(
    models: SimulationModels,
    results: Sequence[MatchResult],
    config: SimulationConfig,
    modes: Sequence[Mode] = tuple(Mode),
) -> SimulationReport:
    """Predict every held-out match with each model and score it against the result."""
    rows = []
    mse = {}
    truths = [r.goals for r in results]
    for mode in modes:
        predictions = [
            simulate_match(models, r.home_team, r.away_team, config, mode).expected
            for r in results
        ]
        mse[mode] = evaluate_mse(predictions, truths)
        log.info("%s: MSE %.4f over %d matches", mode.value, mse[mode], len(results))
        rows.extend(
            SimulationRow(
                r.match_id, r.home_team, r.away_team, mode.value, *p, *r.goals
            )
            for r, p in zip(results, predictions)
        )
    return SimulationReport(tuple(rows), mse)


def export_simulation(report: SimulationReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matches = pd.DataFrame(
        [asdict(row) for row in report.rows],
        columns=list(SimulationRow.__dataclass_fields__),
    )
    summary = pd.DataFrame(
        [{"model": mode.value, "mse": value} for mode, value in report.mse.items()],
        columns=["model", "mse"],
    )
    paths = [out / MATCHES_CSV, out / SUMMARY_CSV]
    matches.to_csv(paths[0], index=False)
    summary.to_csv(paths[1], index=False)
    return paths
