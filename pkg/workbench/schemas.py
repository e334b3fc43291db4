import logging
import os
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import (
    CARTPOLE_DQN_DEFAULTS,
    CARTPOLE_EPISODES,
    GRIDWORLD_DEFAULTS,
    MOVING_AVERAGE_WINDOW,
    TOY_GRAD_STEPS,
    TOY_RESCORE_EVERY,
)
from samplers import SamplerSpec

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Configuration does not match the documented schema."""


class AgentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["tabular", "dqn"] = None
    lr: float = Field(None, gt=0)
    hidden_sizes: tuple[int, ...] = CARTPOLE_DQN_DEFAULTS["hidden_sizes"]
    target_update_every: int = Field(CARTPOLE_DQN_DEFAULTS["target_update_frequency"], ge=1)
    max_epsilon: float = Field(None, ge=0.0, le=1.0)
    min_epsilon: float = Field(CARTPOLE_DQN_DEFAULTS["min_epsilon"], ge=0.0, le=1.0)
    decay_ratio: float = Field(CARTPOLE_DQN_DEFAULTS["decay_ratio"], ge=0.0, le=1.0)

    @field_validator("hidden_sizes", mode="before")
    @classmethod
    def split_sizes(cls, value):
        if isinstance(value, str):
            return tuple(int(part) for part in value.replace("(", "").replace(")", "").split(",") if part.strip())
        return value


class ExperimentConfig(BaseModel):
    """One online experiment: collect an episode, then G planned gradient steps, N times."""

    model_config = ConfigDict(extra="forbid")

    env: Literal["gridworld", "cartpole"]
    sampler: SamplerSpec
    agent: AgentConfig = Field(default_factory=AgentConfig)
    episodes: int = Field(CARTPOLE_EPISODES, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    seeds: int = Field(1, ge=1)
    gamma: float = Field(None, ge=0.0, lt=1.0)
    buffer_capacity: int = Field(None, ge=1)
    eval_window: int = Field(MOVING_AVERAGE_WINDOW, ge=1)
    log_every: int = Field(50, ge=1)
    log_indices: bool = False
    dump_td_every: int = Field(0, ge=0)
    record_wall_clock: bool = False
    export_params: bool = False

    @model_validator(mode="after")
    def apply_env_defaults(self):
        table = CARTPOLE_DQN_DEFAULTS if self.env == "cartpole" else GRIDWORLD_DEFAULTS
        if self.gamma is None:
            self.gamma = table["discount"]
        if self.buffer_capacity is None:
            self.buffer_capacity = table["buffer_size"]

        agent = self.agent
        if agent.kind is None:
            agent.kind = "dqn" if self.env == "cartpole" else "tabular"
        if agent.kind == "tabular" and self.env != "gridworld":
            raise ValueError("the tabular learner needs env=gridworld")
        if agent.lr is None:
            agent.lr = CARTPOLE_DQN_DEFAULTS["lr"] if agent.kind == "dqn" else GRIDWORLD_DEFAULTS["lr"]
        if agent.max_epsilon is None:
            agent.max_epsilon = (
                CARTPOLE_DQN_DEFAULTS["max_epsilon"] if agent.kind == "dqn" else GRIDWORLD_DEFAULTS["exploration"]
            )
        return self

    def seed_list(self) -> list:
        return [self.seed + i for i in range(self.seeds)]


class ToyConfig(BaseModel):
    """Offline GridWorld protocol: one random buffer, repeated plan + update epochs."""

    model_config = ConfigDict(extra="forbid")

    env: Literal["gridworld", "cartpole"] = "gridworld"
    sampler: SamplerSpec
    epochs: int = Field(GRIDWORLD_DEFAULTS["n_epochs"], ge=1)
    buffer_size: int = Field(GRIDWORLD_DEFAULTS["buffer_size"], ge=1)
    lr: float = Field(GRIDWORLD_DEFAULTS["lr"], gt=0)
    gamma: float = Field(GRIDWORLD_DEFAULTS["discount"], ge=0.0, lt=1.0)
    # epochs between TD-score snapshots
    rescore_every: int = Field(TOY_RESCORE_EVERY, ge=1)
    eval_epsilon: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    seeds: int = Field(1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def toy_grad_steps(cls, values):
        sampler = values.get("sampler") if isinstance(values, dict) else None
        if isinstance(sampler, dict) and "grad_steps" not in sampler:
            values = {**values, "sampler": {**sampler, "grad_steps": TOY_GRAD_STEPS}}
        return values

    def seed_list(self) -> list:
        return [self.seed + i for i in range(self.seeds)]


def nest(flat: dict) -> dict:
    """{'sampler.batch_size': 64} -> {'sampler': {'batch_size': 64}}"""
    nested = {}
    for key, value in flat.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Key {key} conflicts with a scalar value for {part}")
        node[parts[-1]] = value
    return nested


def flatten(nested: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in nested.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, prefix=f"{path}."))
        elif isinstance(value, (list, tuple)):
            flat[path] = ",".join(str(v) for v in value)
        elif value is not None:
            flat[path] = value
    return flat


def read_config_file(path: str) -> tuple:
    """Flat key/value pairs of a config file plus its raw lines (for error context)."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")

    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()

    values = dotenv_values(path)
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"{path}:{_line_of(lines, key)}: key '{key}' has no value")

    logger.info(f"Loaded {len(values)} settings from {path}")
    return dict(values), lines


def _line_of(lines: list, key: str):
    for number, line in enumerate(lines, 1):
        stripped = line.strip()
        if stripped.startswith("export "):
            stripped = stripped[len("export "):]
        if stripped.split("=", 1)[0].strip() == key:
            return number
    return "?"


def _describe(error: ValidationError, source: str, lines: list) -> str:
    messages = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"] if not isinstance(part, int))
        where = f"{source}:{_line_of(lines, key)}" if source else "overrides"
        if item["type"] == "missing":
            where = source or "overrides"
        messages.append(f"{where}: {key}: {item['msg']}")
    return "; ".join(messages)


def _validate(model, values: dict, source: str, lines: list):
    try:
        return model.model_validate(nest(values))
    except ValidationError as e:
        raise ConfigError(_describe(e, source, lines)) from e


def load_experiment_config(path: str = None, overrides: dict = None) -> ExperimentConfig:
    """File values (if any) overlaid with CLI overrides, validated against the schema."""
    values, lines = read_config_file(path) if path else ({}, [])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return _validate(ExperimentConfig, values, path, lines)


def load_toy_config(overrides: dict) -> ToyConfig:
    return _validate(ToyConfig, {k: v for k, v in overrides.items() if v is not None}, None, [])
