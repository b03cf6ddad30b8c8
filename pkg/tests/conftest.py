from __future__ import annotations

from typing import Any

import numpy as np
import pytest

from playbook.deeptree import DeepDecisionTree, TreeConfig, train
from playbook.trajectory import (
    PLAY_TYPES,
    Dataset,
    Play,
    PlayType,
    SyntheticConfig,
    generate_synthetic,
)

SMALL_SEASON = SyntheticConfig(
    n_teams=4, n_matches=24, shots_per_match_mean=12.0, tau=10, rng_seed=7
)
SMALL_TREE = TreeConfig(
    n_layers=3,
    branching=(2,),
    target_codebook_size=8,
    epochs=3,
    batch_size=16,
    l2=1e-2,
    refine_iters=3,
)
# same sizes through the command line
CLI_CONFIG: dict[str, Any] = {
    "synthetic": {
        "n_teams": 4,
        "n_matches": 24,
        "shots_per_match_mean": 12.0,
        "tau": 10,
        "rng_seed": 7,
    },
    "tree": {
        "n_layers": 3,
        "branching": [2],
        "target_codebook_size": 8,
        "epochs": 2,
        "batch_size": 16,
        "refine_iters": 3,
    },
    "evaluation": {"compare_layers": [2, 3]},
    "simulation": {"n_runs": 20},
}


def formation(n_agents: int = 22, tau: int = 5) -> np.ndarray:
    """Static, well separated ``(m, tau, 2)`` positions."""
    half = n_agents // 2
    roles = np.arange(half)
    attackers = np.stack([10 + 4.0 * roles, 5 + 3.0 * roles], axis=1)
    defenders = np.stack([60 + 2.0 * roles, 60 - 2.0 * roles], axis=1)
    points = np.concatenate([attackers, defenders])
    return np.repeat(points[:, None, :], tau, axis=1)


def lane_dataset(
    n_per_lane: int = 10, noise_m: float = 0.1, seed: int = 0
) -> Dataset:
    """Six agents; attacker 1 runs in one of three lanes and the middle one scores."""
    rng = np.random.default_rng(seed)
    base = formation(n_agents=6, tau=5)
    plays = []
    for play_type in PLAY_TYPES:
        for lane in range(3):
            for k in range(n_per_lane):
                coords = base + rng.normal(0, noise_m, size=base.shape)
                coords[1, :, 1] += 26.0 + 12.0 * (lane - 1)
                plays.append(
                    Play.from_coords(
                        coords,
                        label=int(lane == 1),
                        play_type=play_type,
                        match_id=f"m{k % 5}",
                    )
                )
    return Dataset(plays=tuple(plays), tau=5, n_agents=6)


def make_play(coords: np.ndarray, **kwargs: Any) -> Play:
    kwargs.setdefault("play_type", PlayType.OPEN_PLAY)
    return Play.from_coords(coords, **kwargs)


@pytest.fixture(scope="session")
def season() -> Dataset:
    return generate_synthetic(SMALL_SEASON)


@pytest.fixture(scope="session")
def tree(season: Dataset) -> DeepDecisionTree:
    return train(season, SMALL_TREE)


@pytest.fixture(scope="session")
def lanes() -> Dataset:
    return lane_dataset()
