"""Immediate-reward shaping with imputed satisfaction and discounted returns."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError

TRANSFORMS = ("identity", "hinge", "power", "hinge_power")


@dataclass(frozen=True)
class RewardConfig:
    """How engagement and imputed satisfaction combine into the policy reward.

    ``transform`` is applied to the satisfaction probability, and the result
    multiplies the engagement reward at each step. With
    ``use_imputed_satisfaction=False`` the reward is engagement alone.
    """

    gamma: float = 0.8
    transform: str = "hinge"
    hinge_threshold: float = 0.75
    exponent: float = 1.0
    use_imputed_satisfaction: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.transform not in TRANSFORMS:
            raise ConfigurationError(f"unknown transform {self.transform!r}; expected one of {TRANSFORMS}")
        if not 0.0 < self.hinge_threshold < 1.0:
            raise ConfigurationError(f"hinge_threshold must be in (0, 1), got {self.hinge_threshold}")
        if not self.exponent >= 1.0:
            raise ConfigurationError(f"exponent must be >= 1, got {self.exponent}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def engagement_only(cls, gamma: float = 0.8) -> "RewardConfig":
        return cls(gamma=gamma, transform="identity", use_imputed_satisfaction=False)


def transform_satisfaction(p_sat, cfg: RewardConfig):
    """Map satisfaction probabilities into [0, 1]. The hinge keeps ``p >= threshold``."""
    p = np.clip(np.asarray(p_sat, dtype=np.float64), 0.0, 1.0)
    kind = cfg.transform
    if kind in ("hinge", "hinge_power"):
        p = np.where(p >= cfg.hinge_threshold, p, 0.0)
    if kind in ("power", "hinge_power"):
        p = p**cfg.exponent
    return p if p.ndim else float(p)


def shape_step_reward(r_e, p_sat, cfg: RewardConfig):
    """Per-step shaped reward ``r_e * f(p_sat)``; ``r_e`` itself for engagement-only configs."""
    r_e = np.asarray(r_e, dtype=np.float64)
    if np.any(r_e < 0):
        raise ConfigurationError("engagement reward must be non-negative")
    if not cfg.use_imputed_satisfaction or p_sat is None:
        out = r_e
    else:
        out = r_e * transform_satisfaction(p_sat, cfg)
    return out if np.ndim(out) else float(out)


def discounted_return(rewards, gamma: float) -> np.ndarray:
    """Reward-to-go along the last axis: ``R_t = sum_{k>=t} gamma^(k-t) r_k``."""
    if not 0.0 <= gamma < 1.0:
        raise ConfigurationError(f"gamma must be in [0, 1), got {gamma}")
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = np.zeros(r.shape[:-1])
    for t in range(r.shape[-1] - 1, -1, -1):
        acc = r[..., t] + gamma * acc
        out[..., t] = acc
    return out
