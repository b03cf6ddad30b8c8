"""Deep decision tree: weighted-distortion clustering nodes over logistic leaves.

The root splits plays by play type. Each play-type branch grows layer by layer:
every leaf is split by average-linkage clustering under the branch's per-role
feature weights ``alpha``. A new leaf starts from the penalised logistic fit of the
plays it holds, then leaf classifiers ``pi`` and ``alpha`` are learnt by
alternating minibatch SGD on the expected squared loss

    L = 1/n sum_i sum_k P(k | X_i) (p_i - f(X_i, pi_k))^2 + l2/2 sum_k |w_k|^2

where ``P(k | X_i)`` is the soft (temperature ``beta``) routing probability.
Centroids are frozen once a layer is built; inference routes hard, to the
nearest weighted centroid.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Optional, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform
from scipy.special import expit, logit, softmax
from sklearn.linear_model import LogisticRegression

from .errors import (
    DimensionError,
    EmptyDatasetError,
    InsufficientDataError,
    InvalidConfigError,
    MalformedRecordError,
    MissingInputError,
    NotFittedError,
    SchemaError,
)
from .trajectory import PLAY_TYPES, Dataset, Play, PlayType, mean_log_loss

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

log = logging.getLogger(__name__)

BETA_SAMPLE_SIZE = 256
DISTORTION_CHUNK = 256
ALPHA_ATOL = 1e-9
LEAF_MAX_ITER = 1000


@dataclass(frozen=True)
class TreeConfig:
    n_layers: int = 4
    # per decision layer; the last value repeats for deeper layers
    branching: tuple[int, ...] = (3,)
    target_codebook_size: int = 36
    # None: 1 / median pairwise distortion of a sample of training plays
    beta: Optional[float] = None
    # largest change of any role weight per step, as a share of the role count
    eta_alpha: float = 0.01
    eta_pi: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    l2: float = 1e-4
    refine_iters: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "branching", tuple(int(b) for b in self.branching))
        if self.n_layers < 2:
            raise InvalidConfigError("n_layers counts the root and leaf layers: >= 2")
        if not self.branching or min(self.branching) < 2:
            raise InvalidConfigError("branching factors must be >= 2")
        if self.beta is not None and self.beta < 0:
            raise InvalidConfigError("beta must be non-negative")
        if min(self.eta_alpha, self.eta_pi, self.l2) < 0:
            raise InvalidConfigError("step sizes and l2 must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.refine_iters < 0:
            raise InvalidConfigError("epochs, batch_size and refine_iters out of range")
        if self.target_codebook_size < len(PLAY_TYPES):
            raise InvalidConfigError("target_codebook_size needs a leaf per play type")

    @property
    def n_decision_layers(self) -> int:
        return self.n_layers - 2

    def branching_at(self, layer: int) -> int:
        return self.branching[min(layer, len(self.branching) - 1)]

    @property
    def leaves_per_branch(self) -> int:
        layers = range(self.n_decision_layers)
        return int(np.prod([self.branching_at(i) for i in layers]))


@dataclass(frozen=True, eq=False)
class FeatureWeights:
    """Per-role distortion weights, non-negative and summing to the role count."""

    alpha: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or (alpha < 0).any() or not np.isfinite(alpha).all():
            raise SchemaError("feature weights must be a finite non-negative vector")
        if abs(alpha.sum() - len(alpha)) > ALPHA_ATOL * len(alpha):
            raise SchemaError(
                f"feature weights must sum to {len(alpha)}, got {alpha.sum()}"
            )
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uniform(cls, n_agents: int) -> FeatureWeights:
        return cls(np.ones(n_agents))

    @classmethod
    def projected(cls, vector: np.ndarray) -> FeatureWeights:
        return cls(project_to_simplex(vector, float(len(vector))))


def project_to_simplex(vector: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{a >= 0, sum(a) = total}``."""
    ordered = np.sort(vector)[::-1]
    cumulative = np.cumsum(ordered) - total
    ranks = np.arange(1, len(vector) + 1)
    rho = np.nonzero(ordered - cumulative / ranks > 0)[0][-1]
    projected = np.maximum(vector - cumulative[rho] / (rho + 1), 0.0)
    # renormalise away the rounding left by the threshold
    return projected * (total / projected.sum())


def weighted_distortion(a: Play, b: Play, w: FeatureWeights) -> float:
    """``sum_l alpha_l |x_{a,l} - x_{b,l}|^2`` over whole role trajectories."""
    if a.coords.shape != b.coords.shape or len(w.alpha) != a.n_agents:
        raise DimensionError(
            f"plays {a.coords.shape} / {b.coords.shape} and"
            f" {len(w.alpha)} weights disagree"
        )
    per_role = np.sum((a.coords - b.coords) ** 2, axis=(1, 2))
    return float(w.alpha @ per_role)


def role_distortions(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """``(n, B, m)`` squared distance of every play's role to every centroid's role."""
    out = np.empty((len(points), len(centroids), points.shape[1]))
    for start in range(0, len(points), DISTORTION_CHUNK):
        diff = points[start : start + DISTORTION_CHUNK, None] - centroids[None]
        out[start : start + DISTORTION_CHUNK] = np.einsum("nbmd,nbmd->nbm", diff, diff)
    return out


@singledispatch
def as_points(plays: Any) -> np.ndarray:
    """``(n, m, 2 * tau)`` per-role flattened trajectories."""
    return np.stack([p.coords.reshape(p.n_agents, -1) for p in plays])


@as_points.register
def _(plays: np.ndarray) -> np.ndarray:
    return plays


@as_points.register
def _(plays: Dataset) -> np.ndarray:
    return plays.tensor.reshape(len(plays), plays.n_agents, -1)


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    centroids: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)


def _average_linkage(distances: np.ndarray, n_clusters: int) -> np.ndarray:
    """Agglomerate until ``n_clusters`` remain; equal merges go to the smallest pair.

    A merged cluster keeps the smaller index, so every cluster is labelled by its
    smallest member and the labels come out in order of first appearance.
    """
    n = len(distances)
    dist = distances.astype(float, copy=True)
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    owner = np.arange(n)
    row_min = dist.min(axis=1)
    row_arg = dist.argmin(axis=1)

    for _ in range(n - n_clusters):
        best = row_min.min()
        i = int(np.flatnonzero(row_min == best)[0])
        j = int(row_arg[i])
        i, j = min(i, j), max(i, j)

        merged = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
        merged[i] = np.inf
        dist[i, :] = dist[:, i] = merged
        dist[j, :] = dist[:, j] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
        owner[owner == j] = i
        row_min[j] = np.inf

        row_min[i], row_arg[i] = dist[i].min(), dist[i].argmin()
        stale = np.flatnonzero(active & ((row_arg == i) | (row_arg == j)))
        for k in stale:
            row_min[k], row_arg[k] = dist[k].min(), dist[k].argmin()
        closer = active & (merged < row_min)
        closer[i] = False
        row_min[closer] = merged[closer]
        row_arg[closer] = i
        # equal distance to a lower-indexed cluster keeps the lower index
        tied = active & (merged == row_min) & (i < row_arg)
        tied[i] = False
        row_arg[tied] = i

    _, labels = np.unique(owner, return_inverse=True)
    return labels


def cluster_node(plays: Any, w: FeatureWeights, B: int) -> Clustering:
    """Average-linkage clustering of plays under the weighted distortion."""
    points = as_points(plays)
    if len(points) < B:
        raise InsufficientDataError(
            f"cannot form {B} clusters from {len(points)} plays"
        )
    if points.shape[1] != len(w.alpha):
        raise DimensionError(f"{points.shape[1]} roles but {len(w.alpha)} weights")

    scaled = points * np.sqrt(w.alpha)[None, :, None]
    distances = squareform(pdist(scaled.reshape(len(points), -1), "sqeuclidean"))
    labels = _average_linkage(distances, B)
    centroids = np.stack([points[labels == b].mean(axis=0) for b in range(B)])
    return Clustering(labels, centroids)


def clustering_distortion(
    plays: Any, clustering: Clustering, w: FeatureWeights
) -> float:
    """Total weighted distortion of every play to its cluster centroid."""
    points = as_points(plays)
    diff = points - clustering.centroids[clustering.labels]
    return float(np.einsum("nmd,nmd->nm", diff, diff).sum(axis=0) @ w.alpha)


def _nearest(
    points: np.ndarray, centroids: np.ndarray, alpha: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels, dropping centroids no point chose."""
    labels = np.argmin(role_distortions(points, centroids) @ alpha, axis=1)
    used = np.unique(labels)
    return np.searchsorted(used, labels), centroids[used]


def refine_partition(
    points: np.ndarray, centroids: np.ndarray, alpha: np.ndarray, iters: int
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Lloyd steps; members always end at their nearest kept centroid."""
    labels, centroids = _nearest(points, centroids, alpha)
    for _ in range(iters):
        means = np.stack(
            [points[labels == b].mean(axis=0) for b in range(len(centroids))]
        )
        if np.array_equal(means, centroids):
            break
        labels, centroids = _nearest(points, means, alpha)
    return labels, centroids


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Standardise features so the expected squared norm of a play vector is 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> FeatureScaler:
        std = features.std(axis=0)
        std[std == 0] = 1.0
        return cls(features.mean(axis=0), std * np.sqrt(features.shape[1]))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale


@dataclass(eq=False)
class PredictionNode:
    pi: np.ndarray
    centroid: np.ndarray
    scaler: FeatureScaler
    play_type: PlayType
    depth: int = 0
    assigned_count: int = 0
    codebook_id: int = -1

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Logits for already-standardised features."""
        return features @ self.pi[:-1] + self.pi[-1]


@dataclass(eq=False)
class DecisionNode:
    centroids: np.ndarray
    children: list[Node]
    depth: int = 0


Node = Union[DecisionNode, PredictionNode]


def iter_leaves(node: Node) -> Iterator[PredictionNode]:
    if isinstance(node, PredictionNode):
        yield node
    else:
        for child in node.children:
            yield from iter_leaves(child)


@dataclass
class Branch:
    play_type: PlayType
    root: Node
    weights: FeatureWeights


@dataclass(frozen=True)
class LossRecord:
    play_type: str
    layer: int
    epoch: int
    loss: float


@dataclass(eq=False)
class DeepDecisionTree:
    config: TreeConfig
    branches: dict[PlayType, Branch]
    scaler: FeatureScaler
    beta: float
    n_agents: int
    tau: int
    loss_trace: list[LossRecord] = field(default_factory=list)
    stopped_early: list[str] = field(default_factory=list)

    @property
    def leaves(self) -> list[PredictionNode]:
        """Leaves in codebook order."""
        return [
            leaf
            for t in PLAY_TYPES
            if t in self.branches
            for leaf in iter_leaves(self.branches[t].root)
        ]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def branch(self, play_type: PlayType) -> Branch:
        try:
            return self.branches[play_type]
        except KeyError:
            raise NotFittedError(f"tree has no {play_type.value} branch") from None

    def alpha(self) -> dict[PlayType, np.ndarray]:
        return {t: b.weights.alpha for t, b in self.branches.items()}


RoleLookup = Callable[[DecisionNode, np.ndarray], np.ndarray]


def _direct_lookup(points: np.ndarray) -> RoleLookup:
    def lookup(node: DecisionNode, rows: np.ndarray) -> np.ndarray:
        return role_distortions(points[rows], node.centroids)

    return lookup


def _cached_lookup(cache: dict[int, np.ndarray]) -> RoleLookup:
    def lookup(node: DecisionNode, rows: np.ndarray) -> np.ndarray:
        return cache[id(node)][rows]

    return lookup


def hard_members(
    node: Node, rows: np.ndarray, lookup: RoleLookup, alpha: np.ndarray
) -> list[tuple[PredictionNode, np.ndarray]]:
    """Rows reaching each leaf when every node descends to its nearest centroid."""
    if isinstance(node, PredictionNode):
        return [(node, rows)]
    choice = np.argmin(lookup(node, rows) @ alpha, axis=1) if len(rows) else rows
    return [
        member
        for b, child in enumerate(node.children)
        for member in hard_members(child, rows[choice == b], lookup, alpha)
    ]


def soft_paths(
    node: Node,
    rows: np.ndarray,
    lookup: RoleLookup,
    alpha: np.ndarray,
    beta: float,
    prob: np.ndarray,
    dlog: np.ndarray,
) -> Iterator[tuple[PredictionNode, np.ndarray, np.ndarray]]:
    """Leaf probabilities along soft routes and ``d log P / d alpha`` per row."""
    if isinstance(node, PredictionNode):
        yield node, prob, dlog
        return
    per_role = lookup(node, rows)
    split = softmax(-beta * (per_role @ alpha), axis=1)
    expected = np.einsum("nb,nbm->nm", split, per_role)
    for b, child in enumerate(node.children):
        yield from soft_paths(
            child,
            rows,
            lookup,
            alpha,
            beta,
            prob * split[:, b],
            dlog - beta * (per_role[:, b, :] - expected),
        )


def route_points(
    branch: Branch, points: np.ndarray
) -> list[tuple[PredictionNode, np.ndarray]]:
    """Hard routing of ``(n, m, 2 * tau)`` points through one branch."""
    rows = np.arange(len(points))
    return hard_members(branch.root, rows, _direct_lookup(points), branch.weights.alpha)


def route_hard(tree: DeepDecisionTree, play: Play) -> int:
    members = route_points(tree.branch(play.play_type), as_points([play]))
    ((leaf, _),) = [(leaf, rows) for leaf, rows in members if len(rows)]
    return leaf.codebook_id


def route_soft(
    tree: DeepDecisionTree, play: Play, beta: float | None = None
) -> np.ndarray:
    """Probability of reaching every leaf; zero outside the play's type branch."""
    beta = tree.beta if beta is None else beta
    branch = tree.branch(play.play_type)
    result = np.zeros(tree.n_leaves)
    paths = soft_paths(
        branch.root,
        np.arange(1),
        _direct_lookup(as_points([play])),
        branch.weights.alpha,
        beta,
        np.ones(1),
        np.zeros((1, tree.n_agents)),
    )
    for leaf, prob, _ in paths:
        result[leaf.codebook_id] = prob[0]
    return result


def leaf_predict(node: PredictionNode, play: Play) -> float:
    """``sigmoid(pi . [x; 1])`` on the standardised flattened play."""
    features = node.scaler.transform(play.coords.reshape(1, -1))
    return float(expit(node.logits(features))[0])


@dataclass(frozen=True, eq=False)
class BranchData:
    points: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @classmethod
    def make(
        cls, dataset: Dataset, indices: Sequence[int], scaler: FeatureScaler
    ) -> BranchData:
        idx = np.asarray(indices, dtype=int)
        return cls(
            points=as_points(dataset)[idx],
            features=scaler.transform(dataset.features[idx]),
            labels=dataset.labels[idx],
        )

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class Objective:
    loss: float
    grad_alpha: np.ndarray
    grad_pi: list[tuple[PredictionNode, np.ndarray]]


def objective(
    branch: Branch,
    data: BranchData,
    rows: np.ndarray,
    beta: float,
    l2: float,
    lookup: RoleLookup | None = None,
) -> Objective:
    """Expected squared loss over ``rows``, with gradients for ``alpha`` and ``pi``."""
    lookup = lookup or _direct_lookup(data.points)
    alpha = branch.weights.alpha
    n = len(rows)
    features, labels = data.features[rows], data.labels[rows]
    loss = 0.0
    grad_alpha = np.zeros_like(alpha)
    grad_pi = []
    start = np.ones(n), np.zeros((n, len(alpha)))
    paths = soft_paths(branch.root, rows, lookup, alpha, beta, *start)
    for leaf, prob, dlog in paths:
        weights = leaf.pi[:-1]
        fitted = expit(leaf.logits(features))
        residual = fitted - labels
        weighted_error = prob * residual**2
        loss += weighted_error.sum() / n + 0.5 * l2 * weights @ weights
        coef = 2 * prob * residual * fitted * (1 - fitted) / n
        grad_pi.append((leaf, np.append(features.T @ coef + l2 * weights, coef.sum())))
        grad_alpha += weighted_error @ dlog / n
    return Objective(float(loss), grad_alpha, grad_pi)


def estimate_beta(dataset: Dataset, rng: np.random.Generator) -> float:
    """Inverse median pairwise (uniform-weight) distortion of a sample of plays."""
    n = min(len(dataset), BETA_SAMPLE_SIZE)
    sample = dataset.features[np.sort(rng.choice(len(dataset), size=n, replace=False))]
    median = float(np.median(pdist(sample, "sqeuclidean"))) if n > 1 else 0.0
    return 1.0 / median if median > 0 else 1.0


def fit_leaf(features: np.ndarray, labels: np.ndarray, l2: float) -> np.ndarray:
    """Starting ``pi``: the L2-penalised logistic fit of the leaf's own plays.

    The penalty matches the training objective, ``l2 / 2 |w|^2`` on the mean loss.
    With one class only the weights stay zero and the bias is the smoothed rate.
    """
    goals = labels.sum()
    pi = np.zeros(features.shape[1] + 1)
    pi[-1] = logit((goals + 1) / (len(labels) + 2))
    if not 0 < goals < len(labels):
        return pi
    model = (
        LogisticRegression(C=1 / (l2 * len(labels)), max_iter=LEAF_MAX_ITER)
        if l2 > 0
        else LogisticRegression(penalty=None, max_iter=LEAF_MAX_ITER)
    )
    model.fit(features, labels)
    return np.append(model.coef_[0], model.intercept_[0])


def _new_leaf(
    data: BranchData,
    rows: np.ndarray,
    scaler: FeatureScaler,
    play_type: PlayType,
    depth: int,
    l2: float,
) -> PredictionNode:
    return PredictionNode(
        pi=fit_leaf(data.features[rows], data.labels[rows], l2),
        centroid=data.points[rows].mean(axis=0),
        scaler=scaler,
        play_type=play_type,
        depth=depth,
        assigned_count=len(rows),
    )


def _replace_nodes(node: Node, replacements: dict[int, Node]) -> Node:
    if id(node) in replacements:
        return replacements[id(node)]
    if isinstance(node, DecisionNode):
        node.children = [_replace_nodes(c, replacements) for c in node.children]
    return node


@dataclass
class _BranchTrainer:
    tree: DeepDecisionTree
    branch: Branch
    data: BranchData
    rng: np.random.Generator
    cache: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def config(self) -> TreeConfig:
        return self.tree.config

    @property
    def lookup(self) -> RoleLookup:
        return _cached_lookup(self.cache)

    def grow(self, layer: int) -> None:
        """Split every leaf holding enough plays into a new decision node."""
        n_clusters = self.config.branching_at(layer - 1)
        members = hard_members(
            self.branch.root,
            np.arange(len(self.data)),
            self.lookup,
            self.branch.weights.alpha,
        )
        replacements: dict[int, Node] = {}
        for position, (leaf, rows) in enumerate(members):
            node = self.split(leaf, rows, n_clusters)
            if node is None:
                where = f"{self.branch.play_type.value}/layer{layer}/leaf{position}"
                log.warning("Branch %s stops splitting with %d plays", where, len(rows))
                self.tree.stopped_early.append(where)
            else:
                replacements[id(leaf)] = node
        self.branch.root = _replace_nodes(self.branch.root, replacements)

    def split(
        self, leaf: PredictionNode, rows: np.ndarray, n_clusters: int
    ) -> DecisionNode | None:
        if len(rows) < max(n_clusters, 2):
            return None
        alpha = self.branch.weights.alpha
        points = self.data.points[rows]
        clustering = cluster_node(points, self.branch.weights, n_clusters)
        labels, centroids = refine_partition(
            points, clustering.centroids, alpha, self.config.refine_iters
        )
        if len(centroids) < 2:
            return None
        node = DecisionNode(
            centroids=centroids,
            children=[
                _new_leaf(
                    self.data,
                    rows[labels == b],
                    self.tree.scaler,
                    leaf.play_type,
                    leaf.depth + 1,
                    self.config.l2,
                )
                for b in range(len(centroids))
            ],
            depth=leaf.depth,
        )
        self.cache[id(node)] = role_distortions(self.data.points, centroids)
        return node

    def objective(self, rows: np.ndarray) -> Objective:
        return objective(
            self.branch, self.data, rows, self.tree.beta, self.config.l2, self.lookup
        )

    def step(self, rows: np.ndarray) -> None:
        cfg = self.config
        obj = self.objective(rows)
        for leaf, grad in obj.grad_pi:
            leaf.pi = leaf.pi - cfg.eta_pi * grad
        if cfg.eta_alpha > 0 and isinstance(self.branch.root, DecisionNode):
            self.step_alpha(self.objective(rows).grad_alpha)

    def step_alpha(self, grad: np.ndarray) -> None:
        """Step against the sum-preserving part of the gradient.

        The steepest role moves by ``eta_alpha * m``; the size of the gradient,
        which scales with ``beta``, is ignored.
        """
        direction = grad - grad.mean()
        scale = np.abs(direction).max()
        if scale > 0:
            alpha = self.branch.weights.alpha
            step = self.config.eta_alpha * len(alpha) * direction / scale
            self.branch.weights = FeatureWeights.projected(alpha - step)

    def full_loss(self) -> float:
        return self.objective(np.arange(len(self.data))).loss

    def fit_layer(self, layer: int) -> None:
        cfg = self.config
        play_type = self.branch.play_type.value
        for epoch in range(cfg.epochs):
            order = self.rng.permutation(len(self.data))
            for start in range(0, len(order), cfg.batch_size):
                self.step(order[start : start + cfg.batch_size])
            loss = self.full_loss()
            self.tree.loss_trace.append(LossRecord(play_type, layer, epoch, loss))
            log.debug("%s layer %d epoch %d: loss %.6f", play_type, layer, epoch, loss)

    def train(self) -> Branch:
        layers = range(1, self.config.n_decision_layers + 1) or range(1)
        for layer in layers:
            if layer:
                self.grow(layer)
            self.fit_layer(layer)
            log.info(
                "%s layer %d: %d leaves",
                self.branch.play_type.value,
                layer,
                sum(1 for _ in iter_leaves(self.branch.root)),
            )
        return self.branch


def _prune(node: Node, counts: dict[int, int]) -> Node | None:
    """Drop leaves no training play reaches; collapse single-child decisions."""
    if isinstance(node, PredictionNode):
        return node if counts.get(id(node), 0) else None
    kept = [
        (b, pruned)
        for b, child in enumerate(node.children)
        if (pruned := _prune(child, counts)) is not None
    ]
    if not kept:
        return None
    if len(kept) == 1:
        return kept[0][1]
    node.centroids = node.centroids[[b for b, _ in kept]]
    node.children = [c for _, c in kept]
    return node


def _finalise(tree: DeepDecisionTree, dataset: Dataset) -> None:
    codebook_id = 0
    for play_type in PLAY_TYPES:
        if play_type not in tree.branches:
            continue
        branch = tree.branches[play_type]
        idx = np.asarray(dataset.by_play_type()[play_type])
        points = as_points(dataset)[idx]
        members = route_points(branch, points)
        counts = {id(leaf): len(rows) for leaf, rows in members}
        pruned = _prune(branch.root, counts)
        if pruned is None:
            raise InsufficientDataError(
                f"no training play reaches the {play_type.value} branch"
            )
        branch.root = pruned
        for leaf, rows in members:
            if len(rows):
                leaf.assigned_count = len(rows)
                leaf.centroid = points[rows].mean(axis=0)
        for leaf in iter_leaves(branch.root):
            leaf.codebook_id = codebook_id
            codebook_id += 1

    if codebook_id != tree.config.target_codebook_size:
        log.warning(
            "Realized codebook has %d elements (target %d)",
            codebook_id,
            tree.config.target_codebook_size,
        )


def train(dataset: Dataset, config: TreeConfig) -> DeepDecisionTree:
    """Grow the tree layer by layer, alternating ``pi`` and ``alpha`` SGD steps."""
    if not len(dataset):
        raise EmptyDatasetError("cannot train on an empty dataset")
    groups = dataset.by_play_type()
    if missing := [t.value for t, idx in groups.items() if not idx]:
        raise InsufficientDataError(f"no training plays of type {', '.join(missing)}")

    rng = np.random.default_rng(config.rng_seed)
    scaler = FeatureScaler.fit(dataset.features)
    beta = config.beta if config.beta is not None else estimate_beta(dataset, rng)
    tree = DeepDecisionTree(config, {}, scaler, beta, dataset.n_agents, dataset.tau)
    log.info("Training on %d plays with beta %.3g", len(dataset), beta)

    for play_type, indices in groups.items():
        data = BranchData.make(dataset, indices, scaler)
        rows = np.arange(len(data))
        root = _new_leaf(data, rows, scaler, play_type, depth=0, l2=config.l2)
        branch = Branch(play_type, root, FeatureWeights.uniform(dataset.n_agents))
        tree.branches[play_type] = _BranchTrainer(tree, branch, data, rng).train()

    _finalise(tree, dataset)
    log.info("Tree has %d leaves", tree.n_leaves)
    return tree


def predict(tree: DeepDecisionTree, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Hard-routed leaf id and goal probability of every play."""
    leaf_ids = np.empty(len(dataset), dtype=int)
    probs = np.empty(len(dataset))
    for play_type, indices in dataset.by_play_type().items():
        if not indices:
            continue
        idx = np.asarray(indices)
        branch = tree.branch(play_type)
        points = as_points(dataset)[idx]
        features = tree.scaler.transform(dataset.features[idx])
        for leaf, rows in route_points(branch, points):
            leaf_ids[idx[rows]] = leaf.codebook_id
            probs[idx[rows]] = expit(leaf.logits(features[rows]))
    return leaf_ids, probs


def evaluate_logloss(tree: DeepDecisionTree, dataset: Dataset) -> float:
    if not len(dataset):
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    _, probs = predict(tree, dataset)
    return mean_log_loss(dataset.labels, probs)


def _node_to_dict(node: Node) -> dict[str, Any]:
    if isinstance(node, PredictionNode):
        return {
            "kind": "leaf",
            "depth": node.depth,
            "codebook_id": node.codebook_id,
            "assigned_count": node.assigned_count,
            "pi": node.pi.tolist(),
            "centroid": node.centroid.tolist(),
        }
    return {
        "kind": "decision",
        "depth": node.depth,
        "centroids": node.centroids.tolist(),
        "children": [_node_to_dict(c) for c in node.children],
    }


def _node_from_dict(
    data: dict[str, Any], scaler: FeatureScaler, play_type: PlayType
) -> Node:
    if data["kind"] == "leaf":
        return PredictionNode(
            pi=np.asarray(data["pi"], dtype=float),
            centroid=np.asarray(data["centroid"], dtype=float),
            scaler=scaler,
            play_type=play_type,
            depth=int(data["depth"]),
            assigned_count=int(data["assigned_count"]),
            codebook_id=int(data["codebook_id"]),
        )
    return DecisionNode(
        centroids=np.asarray(data["centroids"], dtype=float),
        children=[_node_from_dict(c, scaler, play_type) for c in data["children"]],
        depth=int(data["depth"]),
    )


def tree_to_dict(tree: DeepDecisionTree) -> dict[str, Any]:
    return {
        "config": asdict(tree.config),
        "n_agents": tree.n_agents,
        "tau": tree.tau,
        "beta": tree.beta,
        "scaler": {
            "mean": tree.scaler.mean.tolist(),
            "scale": tree.scaler.scale.tolist(),
        },
        "branches": [
            {
                "play_type": t.value,
                "alpha": tree.branches[t].weights.alpha.tolist(),
                "root": _node_to_dict(tree.branches[t].root),
            }
            for t in PLAY_TYPES
            if t in tree.branches
        ],
        "loss_trace": [asdict(r) for r in tree.loss_trace],
        "stopped_early": tree.stopped_early,
    }


def tree_from_dict(data: dict[str, Any]) -> DeepDecisionTree:
    config = data["config"]
    scaler = FeatureScaler(
        np.asarray(data["scaler"]["mean"], dtype=float),
        np.asarray(data["scaler"]["scale"], dtype=float),
    )
    branches = {}
    for item in data["branches"]:
        play_type = PlayType(item["play_type"])
        branches[play_type] = Branch(
            play_type,
            _node_from_dict(item["root"], scaler, play_type),
            FeatureWeights(np.asarray(item["alpha"], dtype=float)),
        )
    return DeepDecisionTree(
        config=TreeConfig(**{**config, "branching": tuple(config["branching"])}),
        branches=branches,
        scaler=scaler,
        beta=float(data["beta"]),
        n_agents=int(data["n_agents"]),
        tau=int(data["tau"]),
        loss_trace=[LossRecord(**r) for r in data.get("loss_trace", [])],
        stopped_early=list(data.get("stopped_early", [])),
    )


def save_tree(tree: DeepDecisionTree, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(tree_to_dict(tree)))
    return path


def load_tree(path: str | Path) -> DeepDecisionTree:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"tree file not found: {path}")
    try:
        return tree_from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(1, f"invalid tree: {exc}") from exc


def export_training(tree: DeepDecisionTree, out_dir: str | Path) -> list[Path]:
    """``alpha.csv`` (role weights per play type) and ``training_loss.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alpha = pd.DataFrame(
        [
            {"play_type": t.value, "role": role, "alpha": value}
            for t, weights in tree.alpha().items()
            for role, value in enumerate(weights)
        ]
    )
    columns = list(LossRecord.__dataclass_fields__)
    losses = pd.DataFrame([asdict(r) for r in tree.loss_trace], columns=columns)
    paths = [out / "alpha.csv", out / "training_loss.csv"]
    alpha.to_csv(paths[0], index=False)
    losses.to_csv(paths[1], index=False)
    return paths

