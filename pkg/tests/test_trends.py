from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from playbook.alignment import align_dataset, learn_template
from playbook.deeptree import TreeConfig, evaluate_logloss, train
from playbook.simulator import (
    Mode,
    SimulationConfig,
    build_models,
    evaluate_schedule,
    match_results,
)
from playbook.trajectory import (
    SyntheticConfig,
    baseline_predict,
    fit_baseline,
    generate_synthetic,
    mean_log_loss,
)

pytestmark = pytest.mark.slow

# the bundled season, cut to about 5000 shots of 20 frames
SHOT_SEASON = replace(SyntheticConfig(), n_matches=210, tau=20, rng_seed=3)
# shot timing driven hard by the score line and the clock
TIMING_SEASON = replace(
    SyntheticConfig(),
    n_matches=210,
    tau=4,
    lead_interarrival_factor=0.8,
    late_game_interarrival_factor=1.0,
    rng_seed=5,
)


def test_deeper_trees_predict_goals_better() -> None:
    season = generate_synthetic(SHOT_SEASON)
    season = align_dataset(season, learn_template(season))
    train_set, test_set = season.split_by_match(0.7, seed=1)

    baseline = mean_log_loss(
        test_set.labels, baseline_predict(fit_baseline(train_set), test_set)
    )
    shallow = train(train_set, TreeConfig(n_layers=2))
    deep = train(train_set, TreeConfig(n_layers=4))

    losses = [baseline, *(evaluate_logloss(t, test_set) for t in (shallow, deep))]
    assert losses == sorted(losses, reverse=True), losses
    for play_type, alpha in deep.alpha().items():
        assert int(np.argmax(alpha)) == SHOT_SEASON.signal_role, play_type


def test_context_simulation_has_the_lowest_error() -> None:
    season = generate_synthetic(TIMING_SEASON)
    config = SimulationConfig(n_runs=300)

    errors: dict[Mode, list[float]] = {mode: [] for mode in Mode}
    for seed in (1, 2, 3):
        train_set, test_set = season.split_by_match(0.7, seed=seed)
        tree = train(train_set, TreeConfig(n_layers=2))
        models = build_models(train_set, tree, config)
        report = evaluate_schedule(models, match_results(test_set), config)
        for mode, mse in report.mse.items():
            errors[mode].append(mse)

    mse = {mode: float(np.mean(values)) for mode, values in errors.items()}
    assert mse[Mode.CONTEXT] < mse[Mode.BHM], mse
    assert mse[Mode.CONTEXT] < mse[Mode.M1], mse
