"""Experiment configuration: flat `key = value` text files with strict keys.

Every key has a default, unknown keys are rejected, and the effective config
hashes stably regardless of key order in the file (the hash covers the full
canonicalized key set, not the file text).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .agents import AgentConfig

ALL_POLICIES = [
    "belady",
    "topk-pop",
    "topk-size",
    "pop-recent",
    "pop-all",
    "random",
    "dqn",
    "drqn",
]


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values, or invalid combinations."""


def _default_data_dir() -> str:
    return os.environ.get("DEEPREF_DATA_DIR", "data")


@dataclass
class ExperimentConfig:
    """Everything a run needs; field names are exactly the config-file keys."""

    # paths ("" means: derive from data_dir, see resolved_* accessors)
    ratings_path: str = ""
    users_path: str = ""
    geocode_path: str = ""
    data_dir: str = field(default_factory=_default_data_dir)
    out_dir: str = "runs"
    # data preparation
    edges: int = 3
    transfer_edge: int = 2
    train_frac: float = 0.8
    seed: int = 7  # preparation seed: catalog sizes and clustering init
    size_min_units: float = 50.0
    size_max_units: float = 2000.0
    silhouette_max_k: int = 10
    synthetic_profile: str = ""  # "", "mini", "desk", or "ml-100k"
    # experiment protocol
    capacities: list[int] = field(default_factory=lambda: [10, 50, 100])
    episode_len: int = 200
    policies: list[str] = field(default_factory=lambda: list(ALL_POLICIES))
    seeds: list[int] = field(default_factory=lambda: [0])
    train_episodes: int = 2000
    progress_every: int = 0  # training progress print interval, 0 = silent
    # agent hyperparameters (one block shared by both agents)
    gamma: float = 0.99
    lr: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 0  # 0 = half of train_episodes
    buffer_capacity: int = 10_000
    episode_buffer_capacity: int = 500
    batch_size: int = 32
    episode_batch_size: int = 4
    target_update_period: int = 1000
    train_every: int = 4
    history_len: int = 4
    hidden_size: int = 512
    hidden_layers: int = 2
    tbptt_forward: int = 300
    tbptt_backward: int = 300

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.edges < 1:
            raise ConfigError("edges must be >= 1")
        if not (0 <= self.transfer_edge < self.edges):
            raise ConfigError(
                f"transfer_edge {self.transfer_edge} outside [0, {self.edges})"
            )
        if not (0.0 < self.train_frac < 1.0):
            raise ConfigError("train_frac must be strictly between 0 and 1")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if not self.capacities or any(c < 1 for c in self.capacities):
            raise ConfigError("capacities must be a non-empty list of positive ints")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.train_episodes < 1:
            raise ConfigError("train_episodes must be >= 1")
        if not (self.size_max_units > self.size_min_units > 0):
            raise ConfigError("need size_max_units > size_min_units > 0")
        if self.silhouette_max_k < 2:
            raise ConfigError("silhouette_max_k must be >= 2")
        unknown = [p for p in self.policies if p not in ALL_POLICIES]
        if unknown:
            raise ConfigError(
                f"unknown policies {unknown}; valid: {', '.join(ALL_POLICIES)}"
            )
        # Agent block constraints are enforced by AgentConfig itself.
        self.agent_config(self.seeds[0])

    # -- derived paths ------------------------------------------------------

    def resolved_ratings_path(self) -> Path:
        return Path(self.ratings_path or Path(self.data_dir) / "ml-100k" / "u.data")

    def resolved_users_path(self) -> Path:
        return Path(self.users_path or Path(self.data_dir) / "ml-100k" / "u.user")

    def resolved_geocode_path(self) -> Path:
        return Path(self.geocode_path or Path(self.data_dir) / "ml-100k" / "zips.csv")

    def prepared_dir(self) -> Path:
        return Path(self.data_dir) / "prepared"

    def agent_config(self, agent_seed: int) -> AgentConfig:
        try:
            return AgentConfig(
                gamma=self.gamma,
                lr=self.lr,
                epsilon_start=self.epsilon_start,
                epsilon_end=self.epsilon_end,
                epsilon_decay_episodes=self.epsilon_decay_episodes,
                buffer_capacity=self.buffer_capacity,
                episode_buffer_capacity=self.episode_buffer_capacity,
                batch_size=self.batch_size,
                episode_batch_size=self.episode_batch_size,
                target_update_period=self.target_update_period,
                train_every=self.train_every,
                history_len=self.history_len,
                hidden_size=self.hidden_size,
                hidden_layers=self.hidden_layers,
                tbptt_forward=self.tbptt_forward,
                tbptt_backward=self.tbptt_backward,
                seed=agent_seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- serialization --------------------------------------------------------

    def canonical_lines(self) -> list[str]:
        return [f"{k}={_canon(getattr(self, k))}" for k in sorted(_FIELD_TYPES)]

    def config_hash(self) -> str:
        text = "\n".join(self.canonical_lines())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _canon(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(key: str, raw: str):
    declared = _FIELD_TYPES[key]
    try:
        if declared == "int":
            return int(raw)
        if declared == "float":
            return float(raw)
        if declared == "list[int]":
            return [int(v.strip()) for v in raw.split(",") if v.strip()]
        if declared == "list[str]":
            return [v.strip() for v in raw.split(",") if v.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {declared}") from exc


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse `key = value` lines; `#` starts a comment; unknown keys are errors."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a config file, or the all-defaults config when path is None."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))
