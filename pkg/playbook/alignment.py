"""Formation templates learnt from data and role alignment against them.

Players swap positions during a match, so before plays can be compared every
agent is relabelled with the template role it occupies. Both steps work on the
time-averaged position of each agent (one point per agent per play).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    DimensionError,
    EmptyDatasetError,
    MalformedRecordError,
    MissingInputError,
    SchemaError,
)
from .trajectory import Dataset, Play

if TYPE_CHECKING:
    from collections.abc import Sequence

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL = 1e-6
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Assignment:
    """``permutation[row]`` is the column (role) given to ``row`` (slot)."""

    permutation: tuple[int, ...]
    cost: float


def _validate_square(cost: np.ndarray) -> None:
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise SchemaError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.isfinite(cost).all():
        raise SchemaError("cost matrix has non-finite entries")


def _is_optimal(total: float, best: float) -> bool:
    return abs(total - best) <= TIE_RTOL * max(1.0, abs(best))


def _forced_completion(
    cost: np.ndarray, row: int, col: int, free: list[int], fixed: float, best: float
) -> list[int] | None:
    """Optimal completion of rows after ``row`` once ``row -> col`` is forced.

    Return None when forcing the pair cannot reach the optimum ``best``.
    """
    rest_rows = list(range(row + 1, len(cost)))
    rest_cols = [c for c in free if c != col]
    forced = fixed + cost[row, col]
    if not rest_rows:
        return [] if _is_optimal(forced, best) else None

    sub = cost[np.ix_(rest_rows, rest_cols)]
    if forced + sub.min(axis=1).sum() > best + TIE_RTOL * max(1.0, abs(best)):
        return None
    rows, cols = linear_sum_assignment(sub)
    if not _is_optimal(forced + sub[rows, cols].sum(), best):
        return None
    return [rest_cols[c] for c in cols]


def hungarian(cost: Sequence[Sequence[float]] | np.ndarray) -> Assignment:
    """Minimum-cost assignment; among equal-cost optima the lexicographically smallest.

    The optimum comes from the shortest augmenting path solver in scipy. Rows are
    then fixed one by one to the smallest column that still admits an optimal
    completion of the remaining rows.
    """
    matrix = np.asarray(cost, dtype=float)
    _validate_square(matrix)
    if not matrix.size:
        return Assignment((), 0.0)

    rows, cols = linear_sum_assignment(matrix)
    best = float(matrix[rows, cols].sum())
    permutation = [int(c) for c in cols]

    free = list(range(len(matrix)))
    fixed = 0.0
    for row in range(len(matrix)):
        for col in free:
            if col == permutation[row]:
                break
            completion = _forced_completion(matrix, row, col, free, fixed, best)
            if completion is not None:
                permutation[row] = col
                permutation[row + 1 :] = completion
                break
        fixed += matrix[row, permutation[row]]
        free.remove(permutation[row])

    return Assignment(
        tuple(permutation), float(matrix[np.arange(len(matrix)), permutation].sum())
    )


def _squared_distances(points: np.ndarray, means: np.ndarray) -> np.ndarray:
    return np.sum((points[:, None, :] - means[None, :, :]) ** 2, axis=-1)


@dataclass(frozen=True, eq=False)
class FormationTemplate:
    att_means: np.ndarray
    def_means: np.ndarray
    iterations_run: int = 0
    final_cost: float = 0.0
    cost_trace: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        att = np.array(self.att_means, dtype=float)
        dfn = np.array(self.def_means, dtype=float)
        if att.shape != dfn.shape or att.ndim != 2 or att.shape[1] != 2:
            raise DimensionError(
                f"templates must both be (m/2, 2), got {att.shape} and {dfn.shape}"
            )
        if not (np.isfinite(att).all() and np.isfinite(dfn).all()):
            raise SchemaError("template means must be finite")
        object.__setattr__(self, "att_means", att)
        object.__setattr__(self, "def_means", dfn)
        object.__setattr__(self, "cost_trace", tuple(self.cost_trace))

    @property
    def n_agents(self) -> int:
        return 2 * len(self.att_means)

    def to_dict(self) -> dict[str, object]:
        return {
            "att_means": self.att_means.tolist(),
            "def_means": self.def_means.tolist(),
            "iterations_run": self.iterations_run,
            "final_cost": self.final_cost,
            "cost_trace": list(self.cost_trace),
        }


def save_template(template: FormationTemplate, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(template.to_dict(), indent=2))
    return path


def load_template(path: str | Path) -> FormationTemplate:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"template file not found: {path}")
    try:
        data = json.loads(path.read_text())
        return FormationTemplate(
            att_means=np.asarray(data["att_means"], dtype=float),
            def_means=np.asarray(data["def_means"], dtype=float),
            iterations_run=int(data.get("iterations_run", 0)),
            final_cost=float(data.get("final_cost", 0.0)),
            cost_trace=tuple(data.get("cost_trace", ())),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(1, f"invalid template: {exc}") from exc


def mean_positions(dataset: Dataset) -> np.ndarray:
    """``(N, m, 2)`` time-averaged position of every role in every play."""
    return dataset.tensor.mean(axis=2)


def _assign_side(positions: np.ndarray, means: np.ndarray) -> tuple[np.ndarray, float]:
    """Reorder every play's agents into template role order; return the total cost."""
    ordered = np.empty_like(positions)
    total = 0.0
    for idx, points in enumerate(positions):
        assignment = hungarian(_squared_distances(points, means))
        ordered[idx, list(assignment.permutation)] = points
        total += assignment.cost
    return ordered, total


def _goalkeeper_first(def_means: np.ndarray, pitch_length: float) -> np.ndarray:
    keeper = int(np.argmin(np.abs(pitch_length - def_means[:, 0])))
    order = [keeper, *(r for r in range(len(def_means)) if r != keeper)]
    return def_means[order]


def learn_template(
    dataset: Dataset, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL
) -> FormationTemplate:
    """Alternate per-play role assignment and role-mean updates until the cost settles.

    Attacking and defending templates are learnt separately but iterated together;
    the recorded cost (both sides summed) never increases between iterations.
    """
    if not len(dataset):
        raise EmptyDatasetError("cannot learn a formation template from no plays")

    half = dataset.n_agents // 2
    positions = mean_positions(dataset)
    sides = [positions[:, :half], positions[:, half:]]
    # role means start at the first play's positions
    means = [side[0].copy() for side in sides]

    trace: list[float] = []
    for iteration in range(1, max_iters + 1):
        total = 0.0
        for idx, side in enumerate(sides):
            ordered, cost = _assign_side(side, means[idx])
            means[idx] = ordered.mean(axis=0)
            total += cost
        trace.append(total)
        log.debug("Template iteration %d: cost %.6f", iteration, total)
        if total <= tol or (len(trace) > 1 and trace[-2] - total < tol):
            break

    final_cost = sum(_assign_side(side, means[i])[1] for i, side in enumerate(sides))
    log.info("Formation template converged after %d iterations", len(trace))
    return FormationTemplate(
        att_means=means[0],
        def_means=_goalkeeper_first(means[1], dataset.pitch_length),
        iterations_run=len(trace),
        final_cost=float(final_cost),
        cost_trace=tuple(trace),
    )


def assign_roles(
    play: Play, template: FormationTemplate
) -> tuple[Assignment, Assignment]:
    """Optimal role assignment for each team; rows are the play's current roles."""
    if play.n_agents != template.n_agents:
        raise DimensionError(
            f"play has {play.n_agents} agents, template expects {template.n_agents}"
        )
    half = play.n_agents // 2
    positions = play.coords.mean(axis=1)
    return (
        hungarian(_squared_distances(positions[:half], template.att_means)),
        hungarian(_squared_distances(positions[half:], template.def_means)),
    )


def align_play(play: Play, template: FormationTemplate) -> Play:
    """Relabel roles to the template; trajectories and their storage order are kept."""
    att, dfn = assign_roles(play, template)
    return play.with_roles(
        [att.permutation[t.role_index] for t in play.attacking],
        [dfn.permutation[t.role_index] for t in play.defending],
    )


def align_dataset(dataset: Dataset, template: FormationTemplate) -> Dataset:
    return Dataset.like(dataset, (align_play(p, template) for p in dataset))
