from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from conftest import SMALL_SEASON, formation, make_play

from playbook.errors import (
    DimensionError,
    InsufficientDataError,
    InvalidConfigError,
    MalformedRecordError,
    MissingInputError,
    SchemaError,
)
from playbook.trajectory import (
    MATCH_LENGTH_S,
    MAX_STOPPAGE_S,
    PLAY_TYPES,
    Dataset,
    SyntheticConfig,
    fit_baseline,
    flatten,
    generate_synthetic,
    handcrafted_features,
    load_plays,
    mean_log_loss,
    save_plays,
)


def test_flatten_layout() -> None:
    coords = np.arange(6 * 4 * 2, dtype=float).reshape(6, 4, 2)
    play = make_play(coords)
    flat = flatten(play)

    tau = 4
    for role in range(6):
        for frame in range(tau):
            assert flat[2 * tau * role + 2 * frame] == coords[role, frame, 0]
            assert flat[2 * tau * role + 2 * frame + 1] == coords[role, frame, 1]


def test_coords_follow_roles_not_storage_order() -> None:
    coords = formation(n_agents=6)
    play = make_play(coords).with_roles([2, 0, 1], [0, 1, 2])

    assert np.array_equal(play.coords[0], coords[1])
    assert np.array_equal(play.coords[2], coords[0])


@pytest.mark.parametrize(
    "coords, kwargs, error",
    [
        (formation(n_agents=6), {"label": 2}, SchemaError),
        (np.zeros((3, 5, 2)), {}, DimensionError),
        (np.zeros((6, 5, 3)), {}, DimensionError),
        (np.full((6, 5, 2), np.nan), {}, SchemaError),
    ],
    ids=["label", "uneven teams", "three coordinates", "nan"],
)
def test_invalid_play(
    coords: np.ndarray, kwargs: dict[str, int], error: type[Exception]
) -> None:
    with pytest.raises(error):
        make_play(coords, **kwargs)


def test_dataset_rejects_plays_off_the_pitch() -> None:
    coords = formation(n_agents=6)
    coords[2, 3] = (-1.0, 10.0)

    with pytest.raises(DimensionError, match="play 0"):
        Dataset(plays=(make_play(coords),), tau=5, n_agents=6)


def test_handcrafted_features() -> None:
    play = make_play(formation())
    features = handcrafted_features(play)

    defenders = formation()[11:, -1]
    attackers = formation()[:11, -1]
    assert features.shape == (20,)
    # attacker 10 is nearest the goal
    assert np.array_equal(features[:2], attackers[10])
    assert np.array_equal(features[2:10], defenders[[4, 3, 5, 2]].ravel())
    assert np.array_equal(features[10:18], attackers[[9, 8, 7, 6]].ravel())
    assert np.array_equal(features[18:], defenders[0])


def test_handcrafted_features_ignore_storage_order() -> None:
    rng = np.random.default_rng(4)
    coords = formation() + rng.normal(0, 2.0, size=formation().shape)
    play = make_play(coords)
    stored = replace(
        play,
        attacking=play.attacking[::-1],
        defending=tuple(play.defending[i] for i in rng.permutation(11)),
    )

    assert np.array_equal(handcrafted_features(stored), handcrafted_features(play))


def test_handcrafted_features_need_enough_agents() -> None:
    with pytest.raises(DimensionError):
        handcrafted_features(make_play(formation(n_agents=6)))


def test_save_and_load(season: Dataset, tmp_path: Path) -> None:
    path = save_plays(season, tmp_path / "plays.jsonl")

    assert load_plays(path) == season


def test_load_missing_file(tmp_path: Path) -> None:
    with pytest.raises(MissingInputError):
        load_plays(tmp_path / "missing.jsonl")


def test_load_reports_the_broken_line(season: Dataset, tmp_path: Path) -> None:
    path = save_plays(season.subset(range(3)), tmp_path / "plays.jsonl")
    lines = path.read_text().splitlines()
    lines[2] = lines[2][:40]
    path.write_text("\n".join(lines))

    with pytest.raises(MalformedRecordError) as exc_info:
        load_plays(path)

    assert exc_info.value.line == 3
    assert exc_info.value.exit_code == 4


def test_load_rejects_wrong_shapes(season: Dataset, tmp_path: Path) -> None:
    path = save_plays(season.subset(range(2)), tmp_path / "plays.jsonl")
    header, *rest = path.read_text().splitlines()
    path.write_text("\n".join([header.replace('"tau":10', '"tau":9'), *rest]))

    with pytest.raises(DimensionError):
        load_plays(path)


def test_split_by_match(season: Dataset) -> None:
    train, test = season.split_by_match(0.7, seed=1)

    assert len(train) + len(test) == len(season)
    assert not set(train.match_ids) & set(test.match_ids)
    assert {p.match_id for p in train} <= set(train.match_ids)
    assert train.split_by_match(0.5, seed=3)[0] == train.split_by_match(0.5, seed=3)[0]


@pytest.mark.parametrize("train_frac", [0.0, 1.0, 1.5])
def test_split_fraction_out_of_range(season: Dataset, train_frac: float) -> None:
    with pytest.raises(InvalidConfigError):
        season.split_by_match(train_frac, seed=0)


def test_mean_log_loss() -> None:
    assert mean_log_loss([1, 0], [0.5, 0.5]) == pytest.approx(np.log(2))
    assert np.isfinite(mean_log_loss([0, 1], [1.0, 0.0]))


def test_synthetic_is_seeded() -> None:
    assert generate_synthetic(SMALL_SEASON) == generate_synthetic(SMALL_SEASON)

    other = SyntheticConfig(**{**SMALL_SEASON.__dict__, "rng_seed": 8})
    assert generate_synthetic(other) != generate_synthetic(SMALL_SEASON)


def test_synthetic_season(season: Dataset) -> None:
    assert len(season.fixtures) == SMALL_SEASON.n_matches
    assert len(season.team_ids) == SMALL_SEASON.n_teams
    assert {p.play_type for p in season} == set(PLAY_TYPES)
    assert set(season.labels.tolist()) == {0.0, 1.0}
    for match_id in {p.match_id for p in season}:
        clocks = [p.shot_clock_s for p in season if p.match_id == match_id]
        assert clocks == sorted(clocks)
        assert clocks[-1] <= MATCH_LENGTH_S + MAX_STOPPAGE_S


FLAT_SEASON = SyntheticConfig(
    n_teams=4,
    n_matches=200,
    tau=2,
    play_type_logits=(0.0, 0.0, 0.0, 0.0),
    team_skill_std=0.0,
    signal_role=None,
    rng_seed=11,
)


def test_label_rate_matches_the_base_rate() -> None:
    labels = generate_synthetic(replace(FLAT_SEASON, goal_base_rate=0.3)).labels

    sigma = np.sqrt(0.3 * 0.7 / len(labels))
    assert len(labels) > 1000
    assert abs(labels.mean() - 0.3) < 3 * sigma


def test_zero_base_rate_never_scores() -> None:
    season = generate_synthetic(replace(SMALL_SEASON, goal_base_rate=0.0))

    assert len(season)
    assert not season.labels.any()


def test_lane_run_is_over_by_the_shot() -> None:
    season = generate_synthetic(SMALL_SEASON)
    still = generate_synthetic(replace(SMALL_SEASON, signal_lane_offset_m=0.0))
    role = 3
    moved, fixed = season.tensor, still.tensor

    np.testing.assert_allclose(moved[:, :, -1], fixed[:, :, -1], atol=1e-9)
    assert np.array_equal(season.labels, still.labels)
    others = [r for r in range(SMALL_SEASON.n_agents) if r != role]
    assert np.array_equal(moved[:, others], fixed[:, others])
    middle = SMALL_SEASON.tau // 2
    assert np.abs(moved[:, role, middle, 1] - fixed[:, role, middle, 1]).max() > 10


@pytest.mark.parametrize(
    "changes",
    [
        {"n_teams": 1},
        {"n_agents": 21},
        {"play_type_probs": (1.0, 0.0, 0.0)},
        {"play_type_spread_m": -1.0},
    ],
)
def test_invalid_synthetic_config(changes: dict[str, object]) -> None:
    with pytest.raises(InvalidConfigError):
        SyntheticConfig(**changes)  # type: ignore[arg-type]


def test_baseline_needs_both_outcomes(season: Dataset) -> None:
    misses = season.subset(i for i, p in enumerate(season) if not p.label)

    with pytest.raises(InsufficientDataError):
        fit_baseline(misses)
