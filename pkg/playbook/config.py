"""JSON configuration: one section per tunable component."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, TypeVar

import platformdirs

from .alignment import DEFAULT_MAX_ITERS, DEFAULT_TOL
from .codebook import HistogramSpec
from .deeptree import TreeConfig
from .errors import InvalidConfigError, MissingInputError, SchemaError
from .simulator import SimulationConfig
from .trajectory import SyntheticConfig
from .utils import JSONDict

log = logging.getLogger(__name__)

APP_NAME = "playbook"
CONFIG_FILENAME = "config.json"

S = TypeVar("S")


@dataclass(frozen=True)
class AlignmentConfig:
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.tol < 0:
            raise InvalidConfigError("alignment needs max_iters >= 1 and tol >= 0")


@dataclass(frozen=True)
class EvaluationConfig:
    train_frac: float = 0.7
    split_seed: int = 1
    compare_layers: tuple[int, ...] = (2, 4)

    def __post_init__(self) -> None:
        object.__setattr__(self, "compare_layers", tuple(self.compare_layers))
        if not 0 < self.train_frac < 1:
            raise InvalidConfigError("train_frac must lie strictly between 0 and 1")
        if not self.compare_layers or min(self.compare_layers) < 2:
            raise InvalidConfigError("compare_layers needs tree depths of at least 2")


@dataclass(frozen=True)
class PlaybookConfig:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    tree: TreeConfig = field(default_factory=TreeConfig)
    histogram: HistogramSpec = field(default_factory=HistogramSpec)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def to_dict(self) -> JSONDict:
        return {f.name: asdict(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: JSONDict) -> PlaybookConfig:
        if not isinstance(data, dict):
            raise SchemaError("configuration must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        if unknown := sorted(set(data) - set(known)):
            raise SchemaError(f"unknown config sections: {', '.join(unknown)}")
        defaults = cls()
        return cls(
            **{
                name: section_from_dict(type(getattr(defaults, name)), value, name)
                for name, value in data.items()
            }
        )

    def with_seed(self, seed: int) -> PlaybookConfig:
        """The same configuration with every random seed replaced."""
        return replace(
            self,
            synthetic=replace(self.synthetic, rng_seed=seed),
            tree=replace(self.tree, rng_seed=seed),
            simulation=replace(self.simulation, rng_seed=seed),
        )


def _coerce(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise SchemaError(f"{where} must be a list")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if value is None or default is None:
        if value is not None and not isinstance(value, (int, float)):
            raise SchemaError(f"{where} must be a number or null")
        return value
    if isinstance(default, bool) or isinstance(value, bool):
        if not isinstance(value, bool) or not isinstance(default, bool):
            raise SchemaError(f"{where} must be {type(default).__name__}")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, type(default)):
        raise SchemaError(f"{where} must be {type(default).__name__}")
    return value


def section_from_dict(cls: type[S], data: Any, section: str) -> S:
    """Build a config section, rejecting unknown keys and mistyped values."""
    if not isinstance(data, dict):
        raise SchemaError(f"config section {section!r} must be an object")
    defaults = cls()
    names = {f.name for f in fields(defaults)}  # type: ignore[arg-type]
    if unknown := sorted(set(data) - names):
        raise SchemaError(f"unknown keys in {section!r}: {', '.join(unknown)}")
    values = {
        key: _coerce(value, getattr(defaults, key), f"{section}.{key}")
        for key, value in data.items()
    }
    return cls(**values)


def default_config_path() -> Path:
    return platformdirs.user_config_path(APP_NAME) / CONFIG_FILENAME


def load_config(path: str | Path | None = None) -> PlaybookConfig:
    """Read ``path``, else the user config file when present, else defaults.

    A run manifest is accepted too: its ``config`` snapshot is read.
    """
    if path is None:
        path = default_config_path()
        if not path.is_file():
            return PlaybookConfig()
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(data, dict) and "subcommand" in data and "config" in data:
        data = data["config"]
    log.debug("Loaded configuration from %s", path)
    return PlaybookConfig.from_dict(data)
