"""Experiment configuration: YAML loading, defaults, and field validation."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .gridworld import DEFAULT_LAYOUT, GridLayout, LayoutError
from .relational import RelationalNetwork, self_interested_network
from .validation import (
    ConfigError,
    check_cell,
    check_discount,
    check_non_negative_int,
    check_positive_float,
    check_positive_int,
    check_unit_interval,
)

ALGORITHMS = ("vdn", "ca_vdn")


@dataclass
class EpsilonConfig:
    start: float = 1.0
    end: float = 0.05
    decay_episodes: int = 2000


@dataclass
class EnvironmentConfig:
    width: int = DEFAULT_LAYOUT.width
    height: int = DEFAULT_LAYOUT.height
    agent_cells: list = field(default_factory=lambda: [list(c) for c in DEFAULT_LAYOUT.agent_starts])
    resource_cells: list = field(
        default_factory=lambda: [list(c) for c in DEFAULT_LAYOUT.resource_cells]
    )
    max_steps: int = 20
    safe_spot_includes_consumed: bool = True

    def layout(self) -> GridLayout:
        return GridLayout(
            width=self.width,
            height=self.height,
            agent_starts=tuple(tuple(c) for c in self.agent_cells),
            resource_cells=tuple(tuple(c) for c in self.resource_cells),
        )


@dataclass
class MalfunctionConfig:
    agent_index: int = 3
    onset_episode: int = 5000
    kind: str = "immobilized"


@dataclass
class RelationalConfig:
    # "self_interested" or an explicit n x n weight matrix
    initial: object = "self_interested"
    assist_weight: float = 1.0
    keep_self_edges: bool = True


@dataclass
class TriggerConfig:
    window: int = 5
    drop_threshold: float = 8.0
    baseline_window: int = 10
    warmup_evaluations: int = 20
    stability_threshold: float = 1.0


@dataclass
class ExperimentConfig:
    algorithm: str = "ca_vdn"
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    episodes: int = 25_000
    eval_interval: int = 50
    out_dir: str = "runs"
    workers: int = 1
    gamma: float = 0.99
    learning_rate: float = 0.001
    batch_size: int = 32
    updates_per_episode: int = 10
    target_update_interval: int = 200
    memory_capacity: int = 50_000
    hidden_dims: list[int] = field(default_factory=lambda: [128, 128])
    checkpoint_interval: int = 0
    epsilon: EpsilonConfig = field(default_factory=EpsilonConfig)
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    malfunction: MalfunctionConfig | None = field(default_factory=MalfunctionConfig)
    relational: RelationalConfig = field(default_factory=RelationalConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)

    @property
    def n_agents(self) -> int:
        return len(self.environment.agent_cells)

    def initial_network(self) -> RelationalNetwork:
        if self.relational.initial == "self_interested":
            return self_interested_network(self.n_agents)
        return RelationalNetwork(np.asarray(self.relational.initial, dtype=np.float64))

    def to_dict(self) -> dict:
        return asdict(self)


def _build(section_cls, data: dict, prefix: str):
    """Instantiate a config dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in section_cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown field {prefix}{sorted(unknown)[0]}")
    return section_cls(**data)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a YAML config file; omitted fields get the defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping at the top level")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    nested = {
        "epsilon": EpsilonConfig,
        "environment": EnvironmentConfig,
        "relational": RelationalConfig,
        "trigger": TriggerConfig,
    }
    kwargs: dict = {}
    for name, cls in nested.items():
        if name in raw:
            section = raw.pop(name)
            if not isinstance(section, dict):
                raise ConfigError(f"{name} must be a mapping, got {section!r}")
            kwargs[name] = _build(cls, section, f"{name}.")
    if "malfunction" in raw:
        section = raw.pop("malfunction")
        if section is None:
            kwargs["malfunction"] = None
        elif isinstance(section, dict):
            kwargs["malfunction"] = _build(MalfunctionConfig, section, "malfunction.")
        else:
            raise ConfigError(f"malfunction must be a mapping or null, got {section!r}")
    config = _build(ExperimentConfig, {**raw, **kwargs}, "")
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    if config.algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {config.algorithm!r}")
    if not isinstance(config.seeds, list) or not config.seeds:
        raise ConfigError(f"seeds must be a non-empty list, got {config.seeds!r}")
    for s in config.seeds:
        check_non_negative_int("seeds entry", s)
    if len(set(config.seeds)) != len(config.seeds):
        raise ConfigError("seeds must be distinct")
    check_positive_int("episodes", config.episodes)
    check_positive_int("eval_interval", config.eval_interval)
    check_positive_int("workers", config.workers)
    check_discount("gamma", config.gamma)
    check_positive_float("learning_rate", config.learning_rate)
    check_positive_int("batch_size", config.batch_size)
    check_positive_int("updates_per_episode", config.updates_per_episode)
    check_positive_int("target_update_interval", config.target_update_interval)
    check_positive_int("memory_capacity", config.memory_capacity)
    check_non_negative_int("checkpoint_interval", config.checkpoint_interval)
    if config.batch_size > config.memory_capacity:
        raise ConfigError("batch_size cannot exceed memory_capacity")
    if not isinstance(config.hidden_dims, list) or not config.hidden_dims:
        raise ConfigError(f"hidden_dims must be a non-empty list, got {config.hidden_dims!r}")
    for h in config.hidden_dims:
        check_positive_int("hidden_dims entry", h)

    eps = config.epsilon
    check_unit_interval("epsilon.start", eps.start)
    check_unit_interval("epsilon.end", eps.end)
    if eps.end > eps.start:
        raise ConfigError(f"epsilon.end ({eps.end}) cannot exceed epsilon.start ({eps.start})")
    check_positive_int("epsilon.decay_episodes", eps.decay_episodes)

    env = config.environment
    check_positive_int("environment.width", env.width)
    check_positive_int("environment.height", env.height)
    check_positive_int("environment.max_steps", env.max_steps)
    for i, cell in enumerate(env.agent_cells):
        check_cell(f"environment.agent_cells[{i}]", cell)
    for i, cell in enumerate(env.resource_cells):
        check_cell(f"environment.resource_cells[{i}]", cell)
    try:
        env.layout().validate()
    except LayoutError as exc:
        raise ConfigError(f"environment: {exc}") from exc

    if config.malfunction is not None:
        m = config.malfunction
        check_non_negative_int("malfunction.onset_episode", m.onset_episode)
        check_non_negative_int("malfunction.agent_index", m.agent_index)
        if m.agent_index >= config.n_agents:
            raise ConfigError(
                f"malfunction.agent_index {m.agent_index} out of range for "
                f"{config.n_agents} agents"
            )
        if m.kind != "immobilized":
            raise ConfigError(f"malfunction.kind must be 'immobilized', got {m.kind!r}")

    rel = config.relational
    check_unit_interval("relational.assist_weight", rel.assist_weight)
    if rel.initial != "self_interested":
        try:
            matrix = np.asarray(rel.initial, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigError(
                "relational.initial must be 'self_interested' or a weight matrix"
            ) from None
        if matrix.shape != (config.n_agents, config.n_agents):
            raise ConfigError(
                f"relational.initial matrix has shape {matrix.shape}, expected "
                f"({config.n_agents}, {config.n_agents})"
            )
        if np.any(matrix < 0.0) or np.any(matrix > 1.0):
            raise ConfigError("relational.initial weights must lie in [0, 1]")

    trig = config.trigger
    check_positive_int("trigger.window", trig.window)
    check_positive_float("trigger.drop_threshold", trig.drop_threshold)
    check_positive_int("trigger.baseline_window", trig.baseline_window)
    check_non_negative_int("trigger.warmup_evaluations", trig.warmup_evaluations)
    if not isinstance(trig.stability_threshold, (int, float)) or trig.stability_threshold < 0:
        raise ConfigError(
            f"trigger.stability_threshold must be >= 0, got {trig.stability_threshold!r}"
        )
