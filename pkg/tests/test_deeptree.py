from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from conftest import SMALL_TREE, formation, make_play
from scipy.special import expit

from playbook.deeptree import (
    Branch,
    BranchData,
    Clustering,
    DecisionNode,
    DeepDecisionTree,
    FeatureScaler,
    FeatureWeights,
    PredictionNode,
    TreeConfig,
    cluster_node,
    clustering_distortion,
    estimate_beta,
    evaluate_logloss,
    export_training,
    fit_leaf,
    leaf_predict,
    load_tree,
    objective,
    predict,
    project_to_simplex,
    refine_partition,
    role_distortions,
    route_hard,
    route_soft,
    save_tree,
    train,
    weighted_distortion,
)
from playbook.errors import (
    DimensionError,
    EmptyDatasetError,
    InsufficientDataError,
    InvalidConfigError,
    MalformedRecordError,
    MissingInputError,
    NotFittedError,
    SchemaError,
)
from playbook.trajectory import PLAY_TYPES, Dataset, PlayType, mean_log_loss

LANE_TREE = TreeConfig(
    n_layers=3,
    branching=(3,),
    target_codebook_size=12,
    epochs=20,
    batch_size=8,
    eta_alpha=0.05,
    refine_iters=5,
)


def lane_of(play_coords: np.ndarray) -> int:
    return round((play_coords[1, 0, 1] - 34) / 12) + 1


@pytest.fixture(scope="module")
def lane_tree(lanes: Dataset) -> DeepDecisionTree:
    return train(lanes, LANE_TREE)


@pytest.mark.parametrize(
    "changes",
    [
        {"n_layers": 1},
        {"branching": (1,)},
        {"beta": -1.0},
        {"eta_pi": -0.1},
        {"target_codebook_size": 3},
    ],
)
def test_invalid_tree_config(changes: dict[str, object]) -> None:
    with pytest.raises(InvalidConfigError):
        replace(TreeConfig(), **changes)


def test_branching_repeats_its_last_value() -> None:
    config = TreeConfig(n_layers=5, branching=(4, 2))

    assert [config.branching_at(i) for i in range(3)] == [4, 2, 2]
    assert config.leaves_per_branch == 16


@pytest.mark.parametrize(
    "alpha", [[1.0, 1.0, 2.0], [-1.0, 2.0, 2.0], [np.nan, 1.5, 1.5]]
)
def test_feature_weights_validation(alpha: list[float]) -> None:
    with pytest.raises(SchemaError):
        FeatureWeights(np.array(alpha))


@pytest.mark.parametrize(
    "vector", [[1.0, 1.0, 1.0], [5.0, 0.0, -2.0], [0.2, 0.1, 0.0], [-3.0, -3.0, -4.0]]
)
def test_projection_lands_on_the_simplex(vector: list[float]) -> None:
    projected = project_to_simplex(np.array(vector), 3.0)

    assert (projected >= 0).all()
    assert projected.sum() == pytest.approx(3.0)
    FeatureWeights(projected)


def test_projection_of_a_feasible_vector_is_itself() -> None:
    vector = np.array([0.5, 2.0, 0.5])

    np.testing.assert_allclose(project_to_simplex(vector, 3.0), vector)


def test_weighted_distortion() -> None:
    coords = formation(n_agents=6)
    moved = coords.copy()
    moved[2] += (3.0, 4.0)
    a, b = make_play(coords), make_play(moved)

    assert weighted_distortion(a, b, FeatureWeights.uniform(6)) == 5 * 25
    ignore_role_2 = FeatureWeights(np.array([1.0, 1.0, 0.0, 1.0, 1.0, 2.0]))
    assert weighted_distortion(a, b, ignore_role_2) == 0
    with pytest.raises(DimensionError):
        weighted_distortion(a, b, FeatureWeights.uniform(4))


def naive_distortion(a: np.ndarray, b: np.ndarray, alpha: np.ndarray) -> float:
    total = 0.0
    for role in range(a.shape[0]):
        for frame in range(a.shape[1]):
            for axis in range(2):
                diff = a[role, frame, axis] - b[role, frame, axis]
                total += alpha[role] * diff**2
    return total


def test_weighted_distortion_matches_a_naive_sum() -> None:
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.uniform(0, 68, size=(2, 22, 100, 2))
        alpha = project_to_simplex(rng.exponential(size=22), 22.0)
        weights = FeatureWeights(alpha)

        distortion = weighted_distortion(make_play(a), make_play(b), weights)

        assert distortion == pytest.approx(naive_distortion(a, b, alpha), rel=1e-9)
        uniform = weighted_distortion(
            make_play(a), make_play(b), FeatureWeights.uniform(22)
        )
        assert uniform == pytest.approx(np.sum((a - b) ** 2), rel=1e-12)


def test_role_distortions_match_direct_sums() -> None:
    rng = np.random.default_rng(0)
    points, centroids = rng.normal(size=(300, 3, 4)), rng.normal(size=(2, 3, 4))

    expected = ((points[:, None] - centroids[None]) ** 2).sum(axis=-1)
    np.testing.assert_allclose(role_distortions(points, centroids), expected)


def crossed_points() -> np.ndarray:
    """Role 0 pairs up plays {0, 1} and {2, 3}; role 1 pairs {0, 2} and {1, 3}."""
    role0 = np.array([[0, 0], [0, 0], [10, 10], [10, 10]], dtype=float)
    role1 = np.array([[0, 0], [10, 10], [0, 0], [10, 10]], dtype=float)
    return np.stack([role0, role1], axis=1)


@pytest.mark.parametrize(
    "alpha, labels",
    [([2.0, 0.0], [0, 0, 1, 1]), ([0.0, 2.0], [0, 1, 0, 1])],
    ids=["role 0", "role 1"],
)
def test_cluster_node_follows_role_weights(
    alpha: list[float], labels: list[int]
) -> None:
    clustering = cluster_node(crossed_points(), FeatureWeights(np.array(alpha)), 2)

    assert clustering.labels.tolist() == labels
    assert clustering_distortion(
        crossed_points(), clustering, FeatureWeights(np.array(alpha))
    ) == pytest.approx(0)


def test_cluster_node_groups() -> None:
    rng = np.random.default_rng(1)
    centres = np.array([0.0, 10.0, 20.0])
    points = np.repeat(centres, 5)[:, None, None] + rng.normal(0, 0.1, (15, 2, 4))

    clustering = cluster_node(points, FeatureWeights.uniform(2), 3)

    assert clustering.labels.tolist() == [0] * 5 + [1] * 5 + [2] * 5
    np.testing.assert_allclose(
        clustering.centroids.mean(axis=(1, 2)), centres, atol=0.1
    )


def test_cluster_node_errors() -> None:
    with pytest.raises(InsufficientDataError):
        cluster_node(crossed_points(), FeatureWeights.uniform(2), 5)
    with pytest.raises(DimensionError):
        cluster_node(crossed_points(), FeatureWeights.uniform(3), 2)


def test_refine_partition_never_increases_distortion() -> None:
    rng = np.random.default_rng(2)
    points = rng.normal(size=(60, 3, 4))
    weights = FeatureWeights(np.array([0.5, 2.0, 0.5]))
    start = cluster_node(points, weights, 4)

    labels, centroids = refine_partition(points, start.centroids, weights.alpha, 10)

    refined = Clustering(labels, centroids)
    assert clustering_distortion(points, refined, weights) <= clustering_distortion(
        points, start, weights
    ) * (1 + 1e-12)
    nearest = np.argmin(role_distortions(points, centroids) @ weights.alpha, axis=1)
    assert np.array_equal(labels, nearest)


def gradient_branch() -> tuple[Branch, BranchData]:
    """Two decision levels so path derivatives accumulate across nodes."""
    rng = np.random.default_rng(3)
    n, m, d, f = 20, 3, 4, 5
    points = rng.normal(size=(n, m, d))
    data = BranchData(points, rng.normal(size=(n, f)), (rng.random(n) < 0.4) * 1.0)
    scaler = FeatureScaler(np.zeros(f), np.ones(f))

    def leaf() -> PredictionNode:
        return PredictionNode(
            rng.normal(size=f + 1), np.zeros((m, d)), scaler, PlayType.CORNER
        )

    inner = DecisionNode(points[2:4].copy(), [leaf(), leaf()], depth=1)
    root = DecisionNode(points[:2].copy(), [inner, leaf()])
    weights = FeatureWeights(np.array([0.5, 1.0, 1.5]))
    return Branch(PlayType.CORNER, root, weights), data


def test_objective_gradients_match_finite_differences() -> None:
    branch, data = gradient_branch()
    rows = np.arange(len(data))
    beta, l2, eps = 0.3, 0.01, 1e-6

    def loss() -> float:
        return objective(branch, data, rows, beta, l2).loss

    analytic = objective(branch, data, rows, beta, l2)

    direction = np.array([1.0, -1.0, 0.0])
    alpha = branch.weights.alpha.copy()
    branch.weights = FeatureWeights(alpha + eps * direction)
    upper = loss()
    branch.weights = FeatureWeights(alpha - eps * direction)
    lower = loss()
    branch.weights = FeatureWeights(alpha)
    assert (upper - lower) / (2 * eps) == pytest.approx(
        analytic.grad_alpha @ direction, rel=1e-5, abs=1e-8
    )

    for leaf, grad in analytic.grad_pi:
        for k in (0, len(leaf.pi) - 1):
            original = leaf.pi.copy()
            leaf.pi = original + eps * np.eye(len(original))[k]
            upper = loss()
            leaf.pi = original - eps * np.eye(len(original))[k]
            lower = loss()
            leaf.pi = original
            assert (upper - lower) / (2 * eps) == pytest.approx(
                grad[k], rel=1e-5, abs=1e-8
            )


@pytest.mark.parametrize("l2", [1e-2, 0.0])
def test_fit_leaf_beats_the_base_rate(l2: float) -> None:
    rng = np.random.default_rng(6)
    features = rng.normal(size=(200, 5))
    labels = (rng.random(200) < expit(features[:, 0] - 1)).astype(float)

    pi = fit_leaf(features, labels, l2)

    fitted = expit(features @ pi[:-1] + pi[-1])
    assert pi[0] > 0
    assert mean_log_loss(labels, fitted) < mean_log_loss(
        labels, np.full(200, labels.mean())
    )


@pytest.mark.parametrize("label", [0.0, 1.0])
def test_fit_leaf_with_one_outcome_keeps_the_smoothed_rate(label: float) -> None:
    pi = fit_leaf(np.ones((8, 3)), np.full(8, label), 1e-3)

    assert not pi[:-1].any()
    assert expit(pi[-1]) == pytest.approx((8 * label + 1) / 10)


def bias_leaf(coords: np.ndarray, bias: float) -> PredictionNode:
    scaler = FeatureScaler(np.zeros(coords.size), np.ones(coords.size))
    pi = np.append(np.zeros(coords.size), bias)
    return PredictionNode(pi, coords.reshape(len(coords), -1), scaler, PlayType.CORNER)


def test_leaf_predict() -> None:
    coords = formation(n_agents=6)
    play = make_play(coords)

    assert leaf_predict(bias_leaf(coords, 0.0), play) == 0.5
    assert leaf_predict(bias_leaf(coords, 20.0), play) > 0.999


def test_estimate_beta(season: Dataset) -> None:
    beta = estimate_beta(season, np.random.default_rng(0))

    assert 0 < beta < 1


def test_alpha_learns_the_informative_role(lane_tree: DeepDecisionTree) -> None:
    for play_type, alpha in lane_tree.alpha().items():
        assert int(np.argmax(alpha)) == 1, play_type
        assert alpha.sum() == pytest.approx(6)


def test_leaves_separate_the_lanes(
    lane_tree: DeepDecisionTree, lanes: Dataset
) -> None:
    leaf_ids, probs = predict(lane_tree, lanes)
    lane = np.array([lane_of(p.coords) for p in lanes])

    for indices in lanes.by_play_type().values():
        idx = np.asarray(indices)
        pairs = set(zip(lane[idx].tolist(), leaf_ids[idx].tolist()))
        assert len(pairs) == 3
        assert len({leaf for _, leaf in pairs}) == 3
    assert probs[lane == 1].mean() > probs[lane != 1].mean()
    assert evaluate_logloss(lane_tree, lanes) < np.log(2)


def test_fixed_weights_keep_the_clustering_partition(lanes: Dataset) -> None:
    tree = train(lanes, replace(LANE_TREE, eta_alpha=0.0, epochs=2))
    leaf_ids, _ = predict(tree, lanes)

    for play_type, indices in lanes.by_play_type().items():
        assert np.array_equal(tree.alpha()[play_type], np.ones(6))
        idx = np.asarray(indices)
        labels = cluster_node(lanes.subset(idx), FeatureWeights.uniform(6), 3).labels
        pairs = set(zip(labels.tolist(), leaf_ids[idx].tolist()))
        assert len(pairs) == len(set(labels.tolist())) == 3
        assert len({leaf for _, leaf in pairs}) == 3


def test_codebook_ids(lane_tree: DeepDecisionTree, lanes: Dataset) -> None:
    leaves = lane_tree.leaves

    assert lane_tree.n_leaves == LANE_TREE.target_codebook_size
    assert [leaf.codebook_id for leaf in leaves] == list(range(len(leaves)))
    order = [PLAY_TYPES.index(leaf.play_type) for leaf in leaves]
    assert order == sorted(order)
    assert sum(leaf.assigned_count for leaf in leaves) == len(lanes)
    assert all(leaf.assigned_count for leaf in leaves)


def test_trained_tree(tree: DeepDecisionTree, season: Dataset) -> None:
    assert set(tree.branches) == set(PLAY_TYPES)
    assert len(PLAY_TYPES) <= tree.n_leaves <= SMALL_TREE.target_codebook_size
    assert sum(leaf.assigned_count for leaf in tree.leaves) == len(season)
    for weights in tree.alpha().values():
        assert (weights >= 0).all()
        assert weights.sum() == pytest.approx(season.n_agents)
    assert tree.loss_trace
    assert all(np.isfinite(record.loss) for record in tree.loss_trace)


def test_routing(tree: DeepDecisionTree, season: Dataset) -> None:
    leaf_ids, probs = predict(tree, season)

    assert ((probs > 0) & (probs < 1)).all()
    for index in range(0, len(season), 17):
        play = season[index]
        soft = route_soft(tree, play)
        assert route_hard(tree, play) == leaf_ids[index]
        assert soft.sum() == pytest.approx(1)
        in_branch = [leaf.play_type is play.play_type for leaf in tree.leaves]
        assert (soft[~np.array(in_branch)] == 0).all()
        sharp = route_soft(tree, play, beta=tree.beta * 1e6)
        assert int(np.argmax(sharp)) == leaf_ids[index]


def uniform_paths(node: DecisionNode | PredictionNode, prob: float) -> dict[int, float]:
    if isinstance(node, PredictionNode):
        return {node.codebook_id: prob}
    share = prob / len(node.children)
    return {k: v for c in node.children for k, v in uniform_paths(c, share).items()}


def test_zero_beta_routes_uniformly(
    lane_tree: DeepDecisionTree, lanes: Dataset
) -> None:
    for index in range(0, len(lanes), 7):
        play = lanes[index]
        expected = np.zeros(lane_tree.n_leaves)
        paths = uniform_paths(lane_tree.branch(play.play_type).root, 1.0)
        for codebook_id, prob in paths.items():
            expected[codebook_id] = prob

        np.testing.assert_allclose(route_soft(lane_tree, play, beta=0.0), expected)


def test_evaluate_logloss_matches_the_direct_formula(
    tree: DeepDecisionTree, season: Dataset
) -> None:
    probs = np.array(
        [leaf_predict(tree.leaves[route_hard(tree, play)], play) for play in season]
    )
    labels = season.labels
    direct = -np.mean(labels * np.log(probs) + (1 - labels) * np.log(1 - probs))

    assert evaluate_logloss(tree, season) == pytest.approx(direct)


def test_training_reduces_the_loss(lanes: Dataset) -> None:
    tree = train(lanes, replace(LANE_TREE, eta_alpha=0.0))

    for play_type in PLAY_TYPES:
        records = [r for r in tree.loss_trace if r.play_type == play_type.value]
        last_layer = max(r.layer for r in records)
        losses = [r.loss for r in records if r.layer == last_layer]
        assert len(losses) == LANE_TREE.epochs
        assert losses[-1] < losses[0], play_type


def test_training_is_seeded(tree: DeepDecisionTree, season: Dataset) -> None:
    again = train(season, SMALL_TREE)

    for left, right in zip(predict(tree, season), predict(again, season)):
        assert np.array_equal(left, right)


def test_tree_file(tree: DeepDecisionTree, season: Dataset, tmp_path: Path) -> None:
    loaded = load_tree(save_tree(tree, tmp_path / "tree.json"))

    assert loaded.config == tree.config
    assert loaded.n_leaves == tree.n_leaves
    for left, right in zip(predict(tree, season), predict(loaded, season)):
        assert np.array_equal(left, right)


def test_tree_file_errors(tmp_path: Path) -> None:
    with pytest.raises(MissingInputError):
        load_tree(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{}")
    with pytest.raises(MalformedRecordError):
        load_tree(broken)


def test_train_errors(lanes: Dataset) -> None:
    with pytest.raises(EmptyDatasetError):
        train(Dataset(plays=(), tau=5, n_agents=6), LANE_TREE)

    open_play = lanes.by_play_type()[PlayType.OPEN_PLAY]
    with pytest.raises(InsufficientDataError, match="free_kick"):
        train(lanes.subset(open_play), LANE_TREE)


def test_unfitted_branch() -> None:
    empty = DeepDecisionTree(
        SMALL_TREE, {}, FeatureScaler(np.zeros(60), np.ones(60)), 1.0, 6, 5
    )

    with pytest.raises(NotFittedError):
        route_hard(empty, make_play(formation(n_agents=6)))


def test_export_training(tree: DeepDecisionTree, tmp_path: Path) -> None:
    alpha_path, loss_path = export_training(tree, tmp_path)

    alpha = pd.read_csv(alpha_path)
    losses = pd.read_csv(loss_path)
    assert list(alpha.columns) == ["play_type", "role", "alpha"]
    assert len(alpha) == len(PLAY_TYPES) * tree.n_agents
    assert list(losses.columns) == ["play_type", "layer", "epoch", "loss"]
    assert len(losses) == len(tree.loss_trace)
