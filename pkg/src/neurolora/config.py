"""Run configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .adapter import AdapterConfig
from .losses import LossConfig
from .optim import OptimizerConfig
from .train import TrainConfig

DEFAULT_SEED = 7
SEED_ENV = "NEUROMOD_SEED"


class ConfigError(ValueError):
    """Invalid or unknown configuration values."""


@dataclass(frozen=True)
class TaskConfig:
    num_tasks: int = 1
    task_index: int = 0
    clusters: int = 4
    n_train_per_cluster: int = 128
    n_eval_per_cluster: int = 32
    noise: float = 0.05
    delta_rank: int = 2
    delta_scale: float = 0.5

    def __post_init__(self):
        if self.num_tasks < 1 or not 0 <= self.task_index < self.num_tasks:
            raise ValueError("need num_tasks >= 1 and 0 <= task_index < num_tasks")
        if self.clusters < 2:
            raise ValueError("clusters must be >= 2")
        if self.n_train_per_cluster < 1 or self.n_eval_per_cluster < 0:
            raise ValueError("sample counts must be positive")
        if self.noise < 0 or self.delta_scale < 0 or self.delta_rank < 1:
            raise ValueError("noise and delta_scale must be >= 0, delta_rank >= 1")


@dataclass(frozen=True)
class LossSection:
    lambda_orth: float = 0.1
    task_loss: str = "mse"

    def __post_init__(self):
        if self.task_loss != "mse":
            raise ValueError("the synthetic tasks are regression; task_loss must be 'mse'")
        LossConfig(self.lambda_orth, self.task_loss)

    def to_loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lambda_orth, task_loss_kind=self.task_loss)


_SECTIONS = {
    "adapter": AdapterConfig,
    "optimizer": OptimizerConfig,
    "training": TrainConfig,
    "loss": LossSection,
    "task": TaskConfig,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = DEFAULT_SEED
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    loss: LossSection = field(default_factory=LossSection)
    task: TaskConfig = field(default_factory=TaskConfig)
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_updates(self, **sections) -> "RunConfig":
        """Return a copy with some section fields replaced.

        ``cfg.with_updates(adapter={"k": 8}, seed=3)``
        """
        data = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
        return config_from_dict(data)


def _build_section(name: str, cls, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {unknown}; allowed: {sorted(known)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def resolve_seed(explicit: int | None, from_config: int | None) -> int:
    """CLI flag, then config file, then ``$NEUROMOD_SEED``, then the default."""
    if explicit is not None:
        return explicit
    if from_config is not None:
        return from_config
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return DEFAULT_SEED


def config_from_dict(raw: dict, seed: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"seed", "out_dir", *_SECTIONS}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}; allowed: {sorted(allowed)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(name, cls, raw.get(name, {}))
    cfg_seed = raw.get("seed")
    if cfg_seed is not None and (isinstance(cfg_seed, bool) or not isinstance(cfg_seed, int)):
        raise ConfigError(f"seed must be an integer, got {cfg_seed!r}")
    out_dir = raw.get("out_dir", "runs")
    if not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string")
    task, adapter = kwargs["task"], kwargs["adapter"]
    if task.clusters * task.num_tasks > adapter.d_in:
        raise ConfigError(
            f"{task.num_tasks} tasks x {task.clusters} clusters need that many orthonormal "
            f"directions, more than d_in={adapter.d_in}"
        )
    if task.delta_rank > min(adapter.d_in, adapter.d_out):
        raise ConfigError("task.delta_rank exceeds min(d_in, d_out)")
    return RunConfig(seed=resolve_seed(seed, cfg_seed), out_dir=out_dir, **kwargs)


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, seed=seed)
