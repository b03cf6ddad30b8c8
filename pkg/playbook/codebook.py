"""The playbook: one element per tree leaf with its expected-goal histogram."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from .deeptree import DeepDecisionTree, leaf_predict, predict, route_hard
from .errors import EmptyDatasetError, InvalidConfigError
from .trajectory import Dataset, Play, PlayType

if TYPE_CHECKING:
    from collections.abc import Sequence

log = logging.getLogger(__name__)

TRAJECTORIES_CSV = "playbook_trajectories.csv"
HISTOGRAMS_CSV = "playbook_histograms.csv"
EDGE_DECIMALS = 12


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: float = 0.1
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.bin_width <= 0 or self.high <= self.low:
            raise InvalidConfigError("histogram needs a positive width and low < high")
        bins = (self.high - self.low) / self.bin_width
        if abs(bins - round(bins)) > 1e-9:
            raise InvalidConfigError(
                f"bin width {self.bin_width} does not divide [{self.low}, {self.high}]"
            )

    @property
    def n_bins(self) -> int:
        return round((self.high - self.low) / self.bin_width)

    @cached_property
    def edges(self) -> np.ndarray:
        # 0.1 * 3 lands above 0.3; rounding puts every edge on its decimal value
        edges = np.linspace(self.low, self.high, self.n_bins + 1)
        return np.round(edges, EDGE_DECIMALS)

    def counts(self, values: np.ndarray) -> np.ndarray:
        """Bins are half-open ``[l_k, l_k+1)`` except the last, which is closed."""
        values = np.asarray(values, dtype=float)
        bins = np.searchsorted(self.edges, values, side="right") - 1
        bins[values == self.edges[-1]] = self.n_bins - 1
        return np.bincount(np.clip(bins, 0, self.n_bins - 1), minlength=self.n_bins)


@dataclass(frozen=True, eq=False)
class CodebookElement:
    id: int
    play_type: PlayType
    mean_play: np.ndarray
    member_count: int
    counts: np.ndarray
    spec: HistogramSpec

    @property
    def density(self) -> np.ndarray:
        if not self.member_count:
            return np.zeros(self.spec.n_bins)
        return self.counts / (self.member_count * self.spec.bin_width)


@dataclass(frozen=True, eq=False)
class Playbook:
    elements: tuple[CodebookElement, ...]
    spec: HistogramSpec

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def n_plays(self) -> int:
        return sum(e.member_count for e in self.elements)


def assign_and_score(tree: DeepDecisionTree, play: Play) -> tuple[int, float]:
    """Codebook element of a play and the element's goal probability for it."""
    element = route_hard(tree, play)
    return element, leaf_predict(tree.leaves[element], play)


def build_histograms(
    tree: DeepDecisionTree, dataset: Dataset, spec: HistogramSpec | None = None
) -> Playbook:
    if not len(dataset):
        raise EmptyDatasetError("cannot build histograms from an empty dataset")
    spec = spec or HistogramSpec()
    elements, probs = predict(tree, dataset)
    playbook = Playbook(
        tuple(
            CodebookElement(
                id=leaf.codebook_id,
                play_type=leaf.play_type,
                mean_play=leaf.centroid.reshape(tree.n_agents, tree.tau, 2),
                member_count=int((elements == leaf.codebook_id).sum()),
                counts=spec.counts(probs[elements == leaf.codebook_id]),
                spec=spec,
            )
            for leaf in tree.leaves
        ),
        spec,
    )
    log.info("Playbook of %d elements over %d plays", len(playbook), playbook.n_plays)
    return playbook


def export_playbook(
    elements: Sequence[CodebookElement], out_dir: str | Path
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trajectories = pd.concat(
        [_trajectory_frame(e) for e in elements] or [_trajectory_frame(None)],
        ignore_index=True,
    )
    histograms = pd.DataFrame(
        [
            {
                "element": e.id,
                "play_type": e.play_type.value,
                "bin_low": low,
                "bin_high": high,
                "count": int(count),
                "density": density,
            }
            for e in elements
            for low, high, count, density in zip(
                e.spec.edges[:-1], e.spec.edges[1:], e.counts, e.density
            )
        ],
        columns=["element", "play_type", "bin_low", "bin_high", "count", "density"],
    )
    paths = [out / TRAJECTORIES_CSV, out / HISTOGRAMS_CSV]
    trajectories.to_csv(paths[0], index=False)
    histograms.to_csv(paths[1], index=False)
    return paths


def _trajectory_frame(element: CodebookElement | None) -> pd.DataFrame:
    columns = ["element", "play_type", "role", "frame", "x", "y"]
    if element is None:
        return pd.DataFrame(columns=columns)
    m, tau, _ = element.mean_play.shape
    role, frame = np.divmod(np.arange(m * tau), tau)
    points = element.mean_play.reshape(-1, 2)
    return pd.DataFrame(
        {
            "element": element.id,
            "play_type": element.play_type.value,
            "role": role,
            "frame": frame,
            "x": points[:, 0],
            "y": points[:, 1],
        },
        columns=columns,
    )
