"""Versioned JSON experiment configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigurationError
from ..imputation import FEATURE_SETS, ImbalanceConfig
from ..policy import ModelConfig
from ..reward import RewardConfig
from ..sim.world import SimConfig
from ..trainer import TrainConfig

CONFIG_FORMAT = "shapedrec-experiment"
CONFIG_VERSION = 1

# ModelConfig fields that come from the world rather than the config file
_WORLD_MODEL_FIELDS = ("n_items", "n_contexts", "n_creators")


@dataclass(frozen=True)
class ArmConfig:
    name: str
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    imbalance: ImbalanceConfig = field(default_factory=ImbalanceConfig)
    feature_set: str = "state+action"
    head_hidden: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("arm name must be non-empty")
        if self.feature_set not in FEATURE_SETS:
            raise ConfigurationError(f"unknown feature set {self.feature_set!r}")
        object.__setattr__(self, "head_hidden", tuple(int(h) for h in self.head_hidden))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "reward": self.reward.to_dict(),
            "train": self.train.to_dict(),
            "imbalance": {"negative_class_weight": self.imbalance.negative_class_weight, "calibrate": self.imbalance.calibrate},
            "feature_set": self.feature_set,
            "head_hidden": list(self.head_hidden),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmConfig":
        _reject_unknown(d, {"name", "reward", "train", "imbalance", "feature_set", "head_hidden"}, "arm")
        return cls(
            name=d["name"],
            reward=RewardConfig(**d.get("reward", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            imbalance=ImbalanceConfig(**d.get("imbalance", {})),
            feature_set=d.get("feature_set", "state+action"),
            head_hidden=tuple(d.get("head_hidden", (64, 32))),
        )


def default_arms() -> tuple[ArmConfig, ArmConfig]:
    """Engagement-only control and the hinge-shaped experiment arm."""
    control = ArmConfig("control", reward=RewardConfig.engagement_only())
    experiment = ArmConfig("experiment", reward=RewardConfig())
    return control, experiment


@dataclass(frozen=True)
class ExperimentConfig:
    """World, model and per-arm settings shared by every seed.

    The first arm is the control. All arms run on the same worlds, logs and
    evaluation users for each seed, so per-seed differences are paired.
    """

    sim: SimConfig = field(default_factory=SimConfig)
    model: dict = field(default_factory=dict)
    arms: tuple[ArmConfig, ...] = field(default_factory=default_arms)
    seeds: tuple[int, ...] = tuple(range(10))
    n_log_episodes: int = 5000
    n_eval_episodes: int = 1000
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(self.arms) < 1:
            raise ConfigurationError("at least one arm is required")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate arm names: {names}")
        if not self.seeds:
            raise ConfigurationError("seed list must be non-empty")
        if self.n_log_episodes < 1 or self.n_eval_episodes < 1:
            raise ConfigurationError("episode counts must be positive")
        bad = set(self.model) - ({f.name for f in fields(ModelConfig)} - set(_WORLD_MODEL_FIELDS))
        if bad:
            raise ConfigurationError(f"unknown or world-derived model fields: {sorted(bad)}")

    def arm(self, name: str) -> ArmConfig:
        for a in self.arms:
            if a.name == name:
                return a
        raise ConfigurationError(f"no arm named {name!r}; have {[a.name for a in self.arms]}")

    def model_config(self, sim: SimConfig | None = None) -> ModelConfig:
        sim = sim or self.sim
        return ModelConfig(n_items=sim.n_items, n_contexts=sim.n_contexts, n_creators=sim.n_creators, **self.model)

    def with_arms(self, *arms: ArmConfig) -> "ExperimentConfig":
        return replace(self, arms=tuple(arms))

    def to_dict(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "version": CONFIG_VERSION,
            "sim": self.sim.to_dict(),
            "model": {k: list(v) if isinstance(v, tuple) else v for k, v in self.model.items()},
            "arms": [a.to_dict() for a in self.arms],
            "seeds": list(self.seeds),
            "n_log_episodes": self.n_log_episodes,
            "n_eval_episodes": self.n_eval_episodes,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if d.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
            raise ConfigurationError(f"not an experiment config (format={d.get('format')!r})")
        if d.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigurationError(f"unsupported config version {d.get('version')}")
        body = {k: v for k, v in d.items() if k not in ("format", "version")}
        _reject_unknown(body, {f.name for f in fields(cls)}, "experiment config")
        kw = dict(body)
        if "sim" in kw:
            kw["sim"] = SimConfig.from_dict(kw["sim"])
        if "arms" in kw:
            kw["arms"] = tuple(ArmConfig.from_dict(a) for a in kw["arms"])
        if "model" in kw and "state_layers" in kw["model"]:
            kw["model"] = dict(kw["model"], state_layers=tuple(kw["model"]["state_layers"]))
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d)


def _reject_unknown(d: dict, known: set, what: str) -> None:
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown {what} fields: {sorted(unknown)}")
