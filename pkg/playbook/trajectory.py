"""Plays, datasets and the synthetic shot generator.

A play is the window of all agent trajectories leading up to a shot. Coordinates
are meters with the origin at the attacking team's left corner flag and the attack
running left to right, so the defended goal is centred on
``(pitch_length, pitch_width / 2)``.

Plays are persisted as line-delimited JSON: a header object followed by one play
per line.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from functools import cached_property
from operator import attrgetter
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable

import numpy as np
from scipy.special import expit, logit
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import StandardScaler
from typing_extensions import Literal, NotRequired, TypedDict

from .errors import (
    DimensionError,
    InsufficientDataError,
    InvalidConfigError,
    MalformedRecordError,
    MissingInputError,
    SchemaError,
)
from .utils import JSONDict

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)

DEFAULT_TAU = 100
DEFAULT_AGENTS = 22
PITCH_LENGTH_M = 105.0
PITCH_WIDTH_M = 68.0
FRAME_RATE_HZ = 10.0
MATCH_LENGTH_S = 5400.0
MAX_STOPPAGE_S = 300.0

GOALKEEPER_ROLE = 0
N_CLOSEST = 4
LOG_LOSS_EPS = 1e-9

TeamKey = Literal["roles_att", "roles_def"]


class PlayRecord(TypedDict):
    roles_att: list[list[list[float]]]
    roles_def: list[list[list[float]]]
    label: int
    play_type: str
    att_team: str
    def_team: str
    is_home: bool
    clock_s: float
    match_id: str
    archetype: NotRequired[int]


_RECORD_ERRORS = (json.JSONDecodeError, KeyError, TypeError, ValueError, SchemaError)


class PlayType(str, Enum):
    FREE_KICK = "free_kick"
    OPEN_PLAY = "open_play"
    CORNER = "corner"
    COUNTER = "counter"


PLAY_TYPES = tuple(PlayType)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AgentTrajectory:
    role_index: int
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise DimensionError(
                f"role {self.role_index}: expected (frames, 2) points, "
                f"got shape {points.shape}"
            )
        if not np.isfinite(points).all():
            raise SchemaError(f"role {self.role_index}: non-finite coordinates")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "role_index", int(self.role_index))

    @property
    def tau(self) -> int:
        return len(self.points)

    @property
    def mean_position(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AgentTrajectory):
            return NotImplemented
        return self.role_index == other.role_index and np.array_equal(
            self.points, other.points
        )


def _check_roles(team: Sequence[AgentTrajectory], side: str) -> None:
    roles = sorted(t.role_index for t in team)
    if roles != list(range(len(team))):
        raise SchemaError(f"{side} role indices {roles} are not a permutation")


@dataclass(frozen=True, eq=False)
class Play:
    attacking: tuple[AgentTrajectory, ...]
    defending: tuple[AgentTrajectory, ...]
    label: int
    play_type: PlayType
    attacking_team: str
    defending_team: str
    is_home: bool
    shot_clock_s: float
    match_id: str
    archetype: int = -1

    def __post_init__(self) -> None:
        object.__setattr__(self, "attacking", tuple(self.attacking))
        object.__setattr__(self, "defending", tuple(self.defending))
        object.__setattr__(self, "play_type", PlayType(self.play_type))
        if len(self.attacking) != len(self.defending) or not self.attacking:
            raise DimensionError(
                f"teams must have equal non-zero size, got "
                f"{len(self.attacking)} attacking and {len(self.defending)} defending"
            )
        _check_roles(self.attacking, "attacking")
        _check_roles(self.defending, "defending")
        if len({t.tau for t in (*self.attacking, *self.defending)}) != 1:
            raise DimensionError("trajectories within a play differ in length")
        if self.label not in {0, 1}:
            raise SchemaError(f"label must be 0 or 1, got {self.label!r}")

    @classmethod
    def from_coords(cls, coords: np.ndarray, **kwargs: Any) -> Play:
        """Build a play from ``(m, tau, 2)`` coordinates, attackers then defenders."""
        coords = np.asarray(coords, dtype=float)
        half = len(coords) // 2
        kwargs.setdefault("play_type", PlayType.OPEN_PLAY)
        kwargs.setdefault("label", 0)
        kwargs.setdefault("attacking_team", "A")
        kwargs.setdefault("defending_team", "B")
        kwargs.setdefault("is_home", True)
        kwargs.setdefault("shot_clock_s", 0.0)
        kwargs.setdefault("match_id", "m0")
        return cls(
            attacking=tuple(AgentTrajectory(r, p) for r, p in enumerate(coords[:half])),
            defending=tuple(AgentTrajectory(r, p) for r, p in enumerate(coords[half:])),
            **kwargs,
        )

    @property
    def n_agents(self) -> int:
        return len(self.attacking) + len(self.defending)

    @property
    def tau(self) -> int:
        return self.attacking[0].tau

    @cached_property
    def coords(self) -> np.ndarray:
        """Role-ordered ``(m, tau, 2)`` coordinates: attackers, then defenders."""
        by_role = attrgetter("role_index")
        ordered = (
            *sorted(self.attacking, key=by_role),
            *sorted(self.defending, key=by_role),
        )
        return _readonly(np.stack([t.points for t in ordered]))

    def with_roles(
        self, attacking_roles: Sequence[int], defending_roles: Sequence[int]
    ) -> Play:
        """Relabel roles; ``*_roles[slot]`` is the new role of the stored trajectory."""
        return replace(
            self,
            attacking=tuple(
                AgentTrajectory(r, t.points)
                for r, t in zip(attacking_roles, self.attacking)
            ),
            defending=tuple(
                AgentTrajectory(r, t.points)
                for r, t in zip(defending_roles, self.defending)
            ),
        )

    def metadata(self) -> JSONDict:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in {"attacking", "defending"}
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Play):
            return NotImplemented
        return self.metadata() == other.metadata() and np.array_equal(
            self.coords, other.coords
        )


def flatten(play: Play) -> np.ndarray:
    """Concatenate ``x_1, y_1, ..., x_tau, y_tau`` per role, attackers first.

    The x-coordinate of role ``r`` at frame ``t`` lands at ``2 * tau * r + 2 * t``.
    """
    return play.coords.reshape(-1)


def handcrafted_features(
    play: Play, pitch_length: float = PITCH_LENGTH_M, pitch_width: float = PITCH_WIDTH_M
) -> np.ndarray:
    """Shot location, 4 closest defenders, 4 closest attackers and the goalkeeper.

    Everything is read at the final frame. The shooter is the attacker nearest the
    centre of the defended goal; distance ties go to the lower role index.
    """
    half = play.n_agents // 2
    if half < N_CLOSEST + 1:
        raise DimensionError(
            f"need at least {N_CLOSEST + 1} agents per team, got {half}"
        )

    final = play.coords[:, -1, :]
    attackers, defenders = final[:half], final[half:]
    goal = np.array([pitch_length, pitch_width / 2])
    shooter = int(np.argmin(np.sum((attackers - goal) ** 2, axis=1)))
    shot = attackers[shooter]

    def closest(points: np.ndarray, excluded: int) -> np.ndarray:
        roles = np.array([r for r in range(len(points)) if r != excluded])
        distances = np.sum((points[roles] - shot) ** 2, axis=1)
        return points[roles[np.lexsort((roles, distances))[:N_CLOSEST]]]

    return np.concatenate(
        [
            shot,
            closest(defenders, GOALKEEPER_ROLE).ravel(),
            closest(attackers, shooter).ravel(),
            defenders[GOALKEEPER_ROLE],
        ]
    )


@dataclass(frozen=True)
class Fixture:
    match_id: str
    home_team: str
    away_team: str
    stoppage_s: float = 0.0


@dataclass(frozen=True, eq=False)
class Dataset:
    plays: tuple[Play, ...]
    tau: int = DEFAULT_TAU
    n_agents: int = DEFAULT_AGENTS
    pitch_length: float = PITCH_LENGTH_M
    pitch_width: float = PITCH_WIDTH_M
    frame_rate_hz: float = FRAME_RATE_HZ
    fixtures: tuple[Fixture, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "plays", tuple(self.plays))
        object.__setattr__(self, "fixtures", tuple(self.fixtures))
        for idx, play in enumerate(self.plays):
            if play.tau != self.tau or play.n_agents != self.n_agents:
                raise DimensionError(
                    f"play {idx}: expected tau={self.tau}, m={self.n_agents}, "
                    f"got tau={play.tau}, m={play.n_agents}"
                )
        if self.plays:
            tensor = self.tensor
            x, y = tensor[..., 0], tensor[..., 1]
            x_out = (x < 0) | (x > self.pitch_length)
            outside = x_out | (y < 0) | (y > self.pitch_width)
            if outside.any():
                idx = int(np.argwhere(outside)[0][0])
                raise DimensionError(f"play {idx}: coordinates outside the pitch")

    @classmethod
    def like(cls, other: Dataset, plays: Iterable[Play], **kwargs: Any) -> Dataset:
        """Dataset with ``other``'s metadata and the given plays."""
        kwargs.setdefault("fixtures", other.fixtures)
        return cls(
            plays=tuple(plays),
            tau=other.tau,
            n_agents=other.n_agents,
            pitch_length=other.pitch_length,
            pitch_width=other.pitch_width,
            frame_rate_hz=other.frame_rate_hz,
            **kwargs,
        )

    def __len__(self) -> int:
        return len(self.plays)

    def __iter__(self) -> Iterator[Play]:
        return iter(self.plays)

    def __getitem__(self, index: int) -> Play:
        return self.plays[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.header() == other.header() and self.plays == other.plays

    @property
    def team_ids(self) -> tuple[str, ...]:
        teams = {t for p in self.plays for t in (p.attacking_team, p.defending_team)}
        teams.update(t for f in self.fixtures for t in (f.home_team, f.away_team))
        return tuple(sorted(teams))

    @property
    def match_ids(self) -> tuple[str, ...]:
        ids = {p.match_id for p in self.plays} | {f.match_id for f in self.fixtures}
        return tuple(sorted(ids))

    @cached_property
    def tensor(self) -> np.ndarray:
        """``(N, m, tau, 2)`` role-ordered coordinates."""
        if not self.plays:
            return np.empty((0, self.n_agents, self.tau, 2))
        return _readonly(np.stack([p.coords for p in self.plays]))

    @cached_property
    def features(self) -> np.ndarray:
        """``(N, 2 * tau * m)`` flattened plays."""
        return self.tensor.reshape(len(self), -1)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.plays], dtype=float)

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset.like(self, (self.plays[i] for i in indices))

    def by_play_type(self) -> dict[PlayType, list[int]]:
        """Indices of the plays of each type, in dataset order."""
        groups: dict[PlayType, list[int]] = {t: [] for t in PLAY_TYPES}
        for idx, play in enumerate(self.plays):
            groups[play.play_type].append(idx)
        return groups

    def split_by_match(self, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
        """Seeded split at match granularity: no match contributes to both sides."""
        if not 0 < train_frac < 1:
            raise InvalidConfigError(f"train_frac must be in (0, 1), got {train_frac}")
        match_ids = self.match_ids
        order = np.random.default_rng(seed).permutation(len(match_ids))
        n_train = round(train_frac * len(match_ids))
        train_ids = {match_ids[i] for i in order[:n_train]}

        def part(keep: Callable[[str], bool]) -> Dataset:
            return Dataset.like(
                self,
                (p for p in self.plays if keep(p.match_id)),
                fixtures=tuple(f for f in self.fixtures if keep(f.match_id)),
            )

        return part(train_ids.__contains__), part(lambda m: m not in train_ids)

    def header(self) -> JSONDict:
        return {
            "tau": self.tau,
            "m": self.n_agents,
            "pitch": [self.pitch_length, self.pitch_width],
            "frame_rate": self.frame_rate_hz,
            "fixtures": [asdict(f) for f in self.fixtures],
        }


def _play_record(play: Play) -> PlayRecord:
    half = play.n_agents // 2
    coords = play.coords.tolist()
    record: PlayRecord = {
        "roles_att": coords[:half],
        "roles_def": coords[half:],
        "label": play.label,
        "play_type": play.play_type.value,
        "att_team": play.attacking_team,
        "def_team": play.defending_team,
        "is_home": play.is_home,
        "clock_s": play.shot_clock_s,
        "match_id": play.match_id,
    }
    if play.archetype >= 0:
        record["archetype"] = play.archetype
    return record


def save_plays(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dumps = json.JSONEncoder(separators=(",", ":")).encode
    with path.open("w") as file:
        file.write(dumps(dataset.header()) + "\n")
        for play in dataset:
            file.write(dumps(_play_record(play)) + "\n")
    return path


def _parse_team(
    record: PlayRecord, key: TeamKey, shape: tuple[int, int, int]
) -> np.ndarray:
    try:
        coords = np.asarray(record[key], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{key}: {exc}") from exc
    if coords.shape != shape:
        raise DimensionError(f"{key}: expected shape {shape}, got {coords.shape}")
    return coords


def _parse_play(record: PlayRecord, tau: int, m: int) -> Play:
    shape = (m // 2, tau, 2)
    coords = np.concatenate(
        [
            _parse_team(record, "roles_att", shape),
            _parse_team(record, "roles_def", shape),
        ]
    )
    return Play.from_coords(
        coords,
        label=int(record["label"]),
        play_type=PlayType(record["play_type"]),
        attacking_team=str(record["att_team"]),
        defending_team=str(record["def_team"]),
        is_home=bool(record["is_home"]),
        shot_clock_s=float(record["clock_s"]),
        match_id=str(record["match_id"]),
        archetype=int(record.get("archetype", -1)),
    )


def _parse_header(line: str) -> JSONDict:
    try:
        header = json.loads(line)
        pitch_length, pitch_width = header["pitch"]
        return {
            "tau": int(header["tau"]),
            "n_agents": int(header["m"]),
            "pitch_length": float(pitch_length),
            "pitch_width": float(pitch_width),
            "frame_rate_hz": float(header.get("frame_rate", FRAME_RATE_HZ)),
            "fixtures": tuple(Fixture(**f) for f in header.get("fixtures", [])),
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(1, f"invalid header: {exc}") from exc


def load_plays(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"play file not found: {path}")

    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedRecordError(1, "missing header")
    meta = _parse_header(lines[0])

    plays = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        idx = len(plays)
        try:
            plays.append(_parse_play(json.loads(line), meta["tau"], meta["n_agents"]))
        except DimensionError as exc:
            raise DimensionError(f"play {idx} (line {line_no}): {exc}") from exc
        except _RECORD_ERRORS as exc:
            raise MalformedRecordError(line_no, f"play {idx}: {exc}") from exc

    log.debug("Loaded %d plays from %s", len(plays), path)
    return Dataset(plays=tuple(plays), **meta)


def mean_log_loss(
    labels: Sequence[float] | np.ndarray, probs: Sequence[float] | np.ndarray
) -> float:
    """Negative mean Bernoulli log-likelihood; probabilities are clamped."""
    p = np.asarray(labels, dtype=float)
    q = np.clip(np.asarray(probs, dtype=float), LOG_LOSS_EPS, 1 - LOG_LOSS_EPS)
    return float(-np.mean(p * np.log(q) + (1 - p) * np.log(1 - q)))


def handcrafted_matrix(dataset: Dataset) -> np.ndarray:
    return np.stack(
        [
            handcrafted_features(p, dataset.pitch_length, dataset.pitch_width)
            for p in dataset
        ]
    )


def fit_baseline(dataset: Dataset) -> Pipeline:
    """Logistic regression on the handcrafted shot features."""
    if len(set(dataset.labels.tolist())) < 2:
        raise InsufficientDataError("baseline needs both goals and misses to train")
    model = make_pipeline(StandardScaler(), LogisticRegression(max_iter=1000))
    return model.fit(handcrafted_matrix(dataset), dataset.labels)


def baseline_predict(model: Pipeline, dataset: Dataset) -> np.ndarray:
    return np.asarray(model.predict_proba(handcrafted_matrix(dataset))[:, 1])


@dataclass(frozen=True)
class SyntheticConfig:
    n_teams: int = 20
    n_matches: int = 380
    shots_per_match_mean: float = 24.0
    goal_base_rate: float = 0.1
    tau: int = DEFAULT_TAU
    n_agents: int = DEFAULT_AGENTS
    pitch_length: float = PITCH_LENGTH_M
    pitch_width: float = PITCH_WIDTH_M
    frame_rate_hz: float = FRAME_RATE_HZ
    # order follows PLAY_TYPES
    play_type_probs: tuple[float, ...] = (0.15, 0.55, 0.15, 0.15)
    play_type_logits: tuple[float, ...] = (0.2, 0.0, -0.2, 0.4)
    # whole-shape drift of every play type, then of every archetype within it
    play_type_spread_m: float = 5.0
    archetypes_per_type: int = 3
    archetype_spread_m: float = 1.0
    archetype_logits: tuple[float, ...] = ()
    team_skill_std: float = 0.3
    # explicit (attack, defence) log-odds per team; drawn from team_skill_std when empty
    team_skills: tuple[tuple[float, float], ...] = ()
    signal_role: int | None = 3
    signal_lane_offset_m: float = 15.0
    signal_lane_logits: tuple[float, float, float] = (-3.0, 0.8, 0.7)
    noise_std_m: float = 0.5
    lead_interarrival_factor: float = 0.3
    late_game_interarrival_factor: float = 0.5
    home_interarrival_factor: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_teams", "n_matches", "tau", "n_agents", "archetypes_per_type"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.n_teams < 2:
            raise InvalidConfigError("n_teams must be at least 2")
        if self.n_agents % 2:
            raise InvalidConfigError("n_agents must be even")
        if self.shots_per_match_mean <= 0:
            raise InvalidConfigError("shots_per_match_mean must be positive")
        if not 0 <= self.goal_base_rate <= 1:
            raise InvalidConfigError("goal_base_rate must be within [0, 1]")
        probs = np.asarray(self.play_type_probs)
        if (
            len(probs) != len(PLAY_TYPES)
            or (probs < 0).any()
            or not np.isclose(probs.sum(), 1)
        ):
            raise InvalidConfigError("play_type_probs must be 4 probabilities, sum 1")
        if len(self.play_type_logits) != len(PLAY_TYPES):
            raise InvalidConfigError("play_type_logits needs one value per play type")
        n_archetypes = self.archetypes_per_type
        if self.archetype_logits and len(self.archetype_logits) != n_archetypes:
            raise InvalidConfigError("archetype_logits needs one value per archetype")
        if self.team_skills and len(self.team_skills) != self.n_teams:
            raise InvalidConfigError("team_skills needs an (attack, defence) per team")
        half = self.n_agents // 2
        if self.signal_role is not None and not 0 <= self.signal_role < half:
            raise InvalidConfigError("signal_role must be an attacking role index")
        spreads = (self.play_type_spread_m, self.archetype_spread_m)
        if min(self.noise_std_m, *spreads, self.team_skill_std) < 0:
            raise InvalidConfigError("standard deviations must be non-negative")

    @property
    def mean_interarrival_s(self) -> float:
        """Mean time between one team's shots when the match is level at kickoff."""
        return 2 * MATCH_LENGTH_S / self.shots_per_match_mean


def _formation(half: int, goal_x: float, depth: float, width: float) -> np.ndarray:
    """Role 0 on the goal line, the rest in rows of four moving away from it."""
    points = [(goal_x, width / 2)]
    for role in range(1, half):
        row, col = divmod(role - 1, 4)
        in_row = min(4, half - 1 - 4 * row)
        points.append((goal_x + depth * (row + 1), width * (col + 1) / (in_row + 1)))
    return np.array(points)


@dataclass
class _Generator:
    config: SyntheticConfig
    rng: np.random.Generator
    teams: tuple[str, ...]
    skills: np.ndarray
    base: np.ndarray
    motions: np.ndarray
    plays: list[Play] = field(default_factory=list)

    @classmethod
    def make(cls, config: SyntheticConfig) -> _Generator:
        rng = np.random.default_rng(config.rng_seed)
        half = config.n_agents // 2
        length = config.pitch_length
        base = np.concatenate(
            [
                _formation(half, 0.25 * length, 0.12 * length, config.pitch_width),
                _formation(half, length - 3, -0.11 * length, config.pitch_width),
            ]
        )
        n_types = len(PLAY_TYPES)
        drift = rng.normal(0, config.play_type_spread_m, size=(n_types, 1, 1, 2))
        shape = (n_types, config.archetypes_per_type, 1, 2)
        drift = drift + rng.normal(0, config.archetype_spread_m, size=shape)
        # every role of a shape moves together
        motions = np.repeat(drift, config.n_agents, axis=2)
        skills = (
            np.asarray(config.team_skills, dtype=float)
            if config.team_skills
            else rng.normal(0, config.team_skill_std, size=(config.n_teams, 2))
        )
        teams = tuple(f"T{i:02d}" for i in range(config.n_teams))
        return cls(config, rng, teams, skills, base, motions)

    def schedule(self) -> list[Fixture]:
        n = len(self.teams)
        pairs = [(h, a) for h in range(n) for a in range(n) if h != a]
        order = self.rng.permutation(len(pairs))
        fixtures = []
        for k in range(self.config.n_matches):
            home, away = pairs[order[k % len(pairs)]]
            fixtures.append(
                Fixture(
                    match_id=f"M{k:04d}",
                    home_team=self.teams[home],
                    away_team=self.teams[away],
                    stoppage_s=float(self.rng.uniform(0, MAX_STOPPAGE_S)),
                )
            )
        return fixtures

    def mean_gap(self, lead: int, clock_s: float, is_home: bool) -> float:
        cfg = self.config
        elapsed = min(clock_s / MATCH_LENGTH_S, 1.0)
        return cfg.mean_interarrival_s * float(
            np.exp(
                cfg.lead_interarrival_factor * lead
                - cfg.late_game_interarrival_factor * elapsed
                - cfg.home_interarrival_factor * is_home
            )
        )

    def trajectories(self, play_type: int, archetype: int, lane: int) -> np.ndarray:
        cfg = self.config
        progress = np.linspace(0, 1, cfg.tau)
        motion = self.motions[play_type, archetype]
        coords = self.base[:, None, :] + progress[None, :, None] * motion[:, None, :]
        if cfg.signal_role is not None:
            # the run leaves the shape and is back in it by the shot
            detour = cfg.signal_lane_offset_m * (lane - 1) * np.sin(np.pi * progress)
            coords[cfg.signal_role, :, 1] += detour
        coords += self.rng.normal(0, cfg.noise_std_m, size=coords.shape)
        coords[..., 0] = np.clip(coords[..., 0], 0, cfg.pitch_length)
        coords[..., 1] = np.clip(coords[..., 1], 0, cfg.pitch_width)
        return coords

    def goal_probability(
        self, play_type: int, archetype: int, lane: int, att: int, dfn: int
    ) -> float:
        cfg = self.config
        log_odds = logit(cfg.goal_base_rate) + cfg.play_type_logits[play_type]
        if cfg.archetype_logits:
            log_odds += cfg.archetype_logits[archetype]
        if cfg.signal_role is not None:
            log_odds += cfg.signal_lane_logits[lane]
        log_odds += self.skills[att, 0] - self.skills[dfn, 1]
        return float(expit(log_odds))

    def shot(self, fixture: Fixture, attacking_home: bool, clock_s: float) -> Play:
        cfg = self.config
        home = self.teams.index(fixture.home_team)
        away = self.teams.index(fixture.away_team)
        att, dfn = (home, away) if attacking_home else (away, home)
        play_type = int(self.rng.choice(len(PLAY_TYPES), p=cfg.play_type_probs))
        archetype = int(self.rng.integers(cfg.archetypes_per_type))
        lane = int(self.rng.integers(3))
        coords = self.trajectories(play_type, archetype, lane)
        prob = self.goal_probability(play_type, archetype, lane, att, dfn)
        return Play.from_coords(
            coords,
            label=int(self.rng.random() < prob),
            play_type=PLAY_TYPES[play_type],
            attacking_team=self.teams[att],
            defending_team=self.teams[dfn],
            is_home=attacking_home,
            shot_clock_s=clock_s,
            match_id=fixture.match_id,
            archetype=archetype,
        )

    def play_match(self, fixture: Fixture) -> None:
        """Shot process where both teams redraw their next shot after every event."""
        end = MATCH_LENGTH_S + fixture.stoppage_s
        score = [0, 0]
        clock = 0.0
        while True:
            next_shot = [
                clock
                + self.rng.exponential(
                    self.mean_gap(score[side] - score[1 - side], clock, side == 0)
                )
                for side in (0, 1)
            ]
            side = int(np.argmin(next_shot))
            clock = next_shot[side]
            if clock > end:
                return
            play = self.shot(fixture, attacking_home=side == 0, clock_s=clock)
            score[side] += play.label
            self.plays.append(play)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Seeded synthetic season with recoverable structure in labels and shot timing."""
    generator = _Generator.make(config)
    fixtures = generator.schedule()
    for fixture in fixtures:
        generator.play_match(fixture)

    log.info(
        "Generated %d plays over %d matches (goal rate %.3f)",
        len(generator.plays),
        len(fixtures),
        np.mean([p.label for p in generator.plays]) if generator.plays else 0.0,
    )
    return Dataset(
        plays=tuple(generator.plays),
        tau=config.tau,
        n_agents=config.n_agents,
        pitch_length=config.pitch_length,
        pitch_width=config.pitch_width,
        frame_rate_hz=config.frame_rate_hz,
        fixtures=tuple(fixtures),
    )
