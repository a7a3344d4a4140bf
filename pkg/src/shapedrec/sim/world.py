"""Synthetic catalog and user population with decoupled appeal and quality.

Engagement (completion ratio) and satisfaction share a user-item affinity
term but carry independent per-item offsets: ``appeal`` drives engagement,
``quality`` drives satisfaction. Their correlation across the catalog is
``rho``. Quality is partly shared within a creator.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DataError

RATING_THRESHOLDS = np.array([0.2, 0.4, 0.6, 0.8])
WORLD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    n_items: int = 2000
    dim: int = 8
    rho: float = 0.3
    sigma_e: float = 0.5
    sigma_s: float = 0.5
    p_resp: float = 0.02
    response_bias: float = 1.5
    drift: float = 0.05
    horizon: int = 20
    seed: int = 0
    n_users: int = 1000
    n_contexts: int = 8
    n_creators: int = 100
    affinity_scale: float = 2.0
    appeal_mean: float = 0.0
    appeal_std: float = 1.0
    quality_mean: float = 1.0
    quality_std: float = 1.0
    creator_share: float = 0.7
    interest_spread: float = 0.5
    rating_noise: float = 0.1
    post_engagement_rate: float = 0.1
    item_length_sec: float = 300.0

    def __post_init__(self):
        checks = [
            (self.n_items >= 1, "n_items must be >= 1"),
            (self.dim >= 1, "dim must be >= 1"),
            (-1.0 <= self.rho <= 1.0, "rho must be in [-1, 1]"),
            (0.0 <= self.p_resp <= 1.0, "p_resp must be in [0, 1]"),
            (self.sigma_e >= 0 and self.sigma_s >= 0, "noise scales must be >= 0"),
            (self.drift >= 0, "drift must be >= 0"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (self.n_users >= 1 and self.n_contexts >= 1 and self.n_creators >= 1, "population sizes must be >= 1"),
            (0.0 <= self.creator_share <= 1.0, "creator_share must be in [0, 1]"),
            (self.rating_noise >= 0, "rating_noise must be >= 0"),
            (0.0 <= self.post_engagement_rate <= 1.0, "post_engagement_rate must be in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SimUser:
    user_id: int
    interest: np.ndarray
    context_id: int


@dataclass
class SimWorld:
    config: SimConfig
    topics: np.ndarray  # (n_items, dim), unit rows
    appeal: np.ndarray
    quality: np.ndarray
    creator: np.ndarray
    length_sec: np.ndarray
    user_interest: np.ndarray  # (n_users, dim), unit rows
    user_context: np.ndarray
    context_centers: np.ndarray = field(repr=False)

    @property
    def n_items(self) -> int:
        return self.topics.shape[0]

    def user(self, user_id: int) -> SimUser:
        return SimUser(int(user_id), self.user_interest[user_id].copy(), int(self.user_context[user_id]))

    def to_dict(self) -> dict:
        return {
            "format": "shapedrec-world",
            "version": WORLD_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "items": {
                "topics": self.topics.tolist(),
                "appeal": self.appeal.tolist(),
                "quality": self.quality.tolist(),
                "creator": self.creator.tolist(),
                "length_sec": self.length_sec.tolist(),
            },
            "users": {"interest": self.user_interest.tolist(), "context": self.user_context.tolist()},
            "context_centers": self.context_centers.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SimWorld":
        d = json.loads(Path(path).read_text())
        if d.get("format") != "shapedrec-world" or d.get("version") != WORLD_FORMAT_VERSION:
            raise DataError(f"{path}: not a version-{WORLD_FORMAT_VERSION} world file")
        it, us = d["items"], d["users"]
        return cls(
            config=SimConfig.from_dict(d["config"]),
            topics=np.array(it["topics"]),
            appeal=np.array(it["appeal"]),
            quality=np.array(it["quality"]),
            creator=np.array(it["creator"], dtype=np.int64),
            length_sec=np.array(it["length_sec"]),
            user_interest=np.array(us["interest"]),
            user_context=np.array(us["context"], dtype=np.int64),
            context_centers=np.array(d["context_centers"]),
        )


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _standardize(x: np.ndarray) -> np.ndarray:
    x = x - x.mean()
    sd = x.std()
    return x / sd if sd > 0 else x


def spawn_world(cfg: SimConfig) -> SimWorld:
    """Draw a catalog and user population deterministically from ``cfg.seed``.

    The sample correlation of appeal and quality equals ``rho`` exactly:
    appeal is built from standardized quality plus a component orthogonal
    to it.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    n, d = cfg.n_items, cfg.dim
    topics = _normalize_rows(rng.normal(size=(n, d)))
    creator = rng.integers(0, cfg.n_creators, size=n)
    creator_q = rng.normal(size=cfg.n_creators)
    q_raw = np.sqrt(cfg.creator_share) * creator_q[creator] + np.sqrt(1 - cfg.creator_share) * rng.normal(size=n)
    f_raw = rng.normal(size=n)
    if n > 2:
        qz = _standardize(q_raw)
        f = f_raw - f_raw.mean()
        f = _standardize(f - (f @ qz) / (qz @ qz) * qz)
    else:
        qz, f = q_raw, f_raw
    az = cfg.rho * qz + np.sqrt(max(0.0, 1 - cfg.rho**2)) * f
    quality = cfg.quality_mean + cfg.quality_std * qz
    appeal = cfg.appeal_mean + cfg.appeal_std * az
    length = cfg.item_length_sec * rng.lognormal(0.0, 0.5, size=n)

    centers = _normalize_rows(rng.normal(size=(cfg.n_contexts, d)))
    user_context = rng.integers(0, cfg.n_contexts, size=cfg.n_users)
    noise = rng.normal(size=(cfg.n_users, d)) * cfg.interest_spread
    interest = _normalize_rows(centers[user_context] + noise)
    return SimWorld(cfg, topics, appeal, quality, creator, length, interest, user_context, centers)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


# -- step dynamics -----------------------------------------------------------
NOISE_FIELDS = ("action_u", "eps_e", "eps_s", "survey_u", "rating_noise", "post_u")


def draw_step_noise(rng: np.random.Generator, shape=()) -> dict[str, np.ndarray]:
    """All randomness consumed by one step, drawn in a fixed order."""
    u = rng.random(size=shape + (4,))
    z = rng.normal(size=shape + (3,))
    return {
        "action_u": u[..., 0],
        "eps_e": z[..., 0],
        "eps_s": z[..., 1],
        "survey_u": u[..., 1],
        "rating_noise": z[..., 2],
        "post_u": u[..., 2],
    }


def rating_from_noisy(noisy_sat) -> np.ndarray:
    return 1 + np.searchsorted(RATING_THRESHOLDS, np.clip(noisy_sat, 0.0, 1.0), side="right")


def sample_survey_rating(true_sat_prob, rng: np.random.Generator, noise: float = 0.1):
    """Ordinal rating 1..5 from a noisy copy of the satisfaction probability."""
    p = np.asarray(true_sat_prob, dtype=np.float64)
    r = rating_from_noisy(p + noise * rng.normal(size=p.shape))
    return int(r) if r.ndim == 0 else r


def step_batch(world: SimWorld, interest: np.ndarray, items: np.ndarray, noise: dict) -> dict[str, np.ndarray]:
    """Vectorized environment response for one step of many users."""
    cfg = world.config
    t = world.topics[items]
    aff = cfg.affinity_scale * np.einsum("nd,nd->n", interest, t)
    engagement = _logistic(aff + world.appeal[items] + cfg.sigma_e * noise["eps_e"])
    sat = _logistic(aff + world.quality[items] + cfg.sigma_s * noise["eps_s"])
    p_survey = np.clip(cfg.p_resp * (1.0 + cfg.response_bias * (sat - 0.5)), 0.0, 1.0)
    surveyed = noise["survey_u"] < p_survey
    rating = np.where(surveyed, rating_from_noisy(sat + cfg.rating_noise * noise["rating_noise"]), 0)
    rate = cfg.post_engagement_rate
    like = noise["post_u"] < rate * sat
    dislike = ~like & (noise["post_u"] < rate)
    if cfg.drift > 0:
        nxt = _normalize_rows(interest + cfg.drift * engagement[:, None] * t)
    else:
        nxt = interest.copy()
    return {
        "engagement": engagement,
        "true_sat_prob": sat,
        "survey_prob": p_survey,
        "rating": rating.astype(np.int64),
        "like": like,
        "dislike": dislike,
        "time_spent_sec": engagement * world.length_sec[items],
        "next_interest": nxt,
    }


@dataclass
class StepOutcome:
    engagement: float
    true_sat_prob: float
    survey_rating: int | None
    like: bool
    dislike: bool
    time_spent_sec: float
    next_user: SimUser


def simulate_step(world: SimWorld, user: SimUser, item_id: int, rng: np.random.Generator) -> StepOutcome:
    """Single-user step; same dynamics as the batched path used for log generation."""
    if not 0 <= item_id < world.n_items:
        raise DataError(f"item {item_id} outside catalog of {world.n_items}")
    noise = {k: np.atleast_1d(v) for k, v in draw_step_noise(rng).items()}
    out = step_batch(world, user.interest[None, :], np.array([item_id]), noise)
    rating = int(out["rating"][0])
    return StepOutcome(
        engagement=float(out["engagement"][0]),
        true_sat_prob=float(out["true_sat_prob"][0]),
        survey_rating=rating if rating > 0 else None,
        like=bool(out["like"][0]),
        dislike=bool(out["dislike"][0]),
        time_spent_sec=float(out["time_spent_sec"][0]),
        next_user=SimUser(user.user_id, out["next_interest"][0], user.context_id),
    )
