"""Logged episodes, behavior-policy rollouts and the JSON-lines log format.

Each step records what a production log would contain (context, item,
behavior propensity, engagement, optional survey rating). The simulator's
ground truth (satisfaction probability, likes, dislikes) lives in a separate
evaluation section that a training-mode reader never loads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np

from ..errors import DataError, HiddenGroundTruthError
from .world import SimWorld, draw_step_noise, step_batch

TRAIN, EVAL = "train", "eval"


class PolicySession(Protocol):
    def probs(self, t: int, contexts: np.ndarray) -> np.ndarray: ...

    def observe(self, items: np.ndarray, completions: np.ndarray) -> None: ...


class BehaviorPolicy(Protocol):
    n_items: int

    def session(self, n: int) -> PolicySession: ...


class _UniformSession:
    def __init__(self, n: int, n_items: int):
        self.n, self.n_items = n, n_items

    def probs(self, t, contexts):
        return np.full((self.n, self.n_items), 1.0 / self.n_items)

    def observe(self, items, completions):
        pass


@dataclass(frozen=True)
class UniformPolicy:
    n_items: int

    def session(self, n: int) -> _UniformSession:
        return _UniformSession(n, self.n_items)


@dataclass
class GroundTruth:
    true_sat_prob: np.ndarray
    like: np.ndarray
    dislike: np.ndarray


@dataclass
class LoggedStep:
    episode_id: int
    user_id: int
    step: int
    context_id: int
    item_id: int
    propensity: float
    completion_ratio: float
    time_spent_sec: float
    survey_rating: int | None


@dataclass
class EpisodeLogs:
    """Fixed-horizon episodes stored as ``(n_episodes, horizon)`` arrays.

    ``survey`` holds the rating 1..5, or 0 where no survey was answered.
    """

    episode_id: np.ndarray
    user_id: np.ndarray
    context: np.ndarray
    item: np.ndarray
    propensity: np.ndarray
    completion: np.ndarray
    time_spent: np.ndarray
    survey: np.ndarray
    mode: str = TRAIN
    _truth: GroundTruth | None = None

    @property
    def n_episodes(self) -> int:
        return int(self.item.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.item.shape[1]) if self.item.ndim == 2 else 0

    @property
    def has_ground_truth(self) -> bool:
        return self._truth is not None

    @property
    def ground_truth(self) -> GroundTruth:
        if self.mode != EVAL or self._truth is None:
            raise HiddenGroundTruthError("ground truth is not available in training-mode logs")
        return self._truth

    def training_view(self) -> "EpisodeLogs":
        return replace(self, mode=TRAIN, _truth=None)

    def subset(self, rows) -> "EpisodeLogs":
        rows = np.asarray(rows, dtype=np.int64)
        truth = None
        if self._truth is not None:
            truth = GroundTruth(*(getattr(self._truth, k)[rows] for k in ("true_sat_prob", "like", "dislike")))
        return EpisodeLogs(
            self.episode_id[rows],
            self.user_id[rows],
            self.context[rows],
            self.item[rows],
            self.propensity[rows],
            self.completion[rows],
            self.time_spent[rows],
            self.survey[rows],
            self.mode,
            truth,
        )

    def steps(self) -> Iterator[LoggedStep]:
        for e in range(self.n_episodes):
            for t in range(self.horizon):
                rating = int(self.survey[e, t])
                yield LoggedStep(
                    int(self.episode_id[e]),
                    int(self.user_id[e]),
                    t,
                    int(self.context[e, t]),
                    int(self.item[e, t]),
                    float(self.propensity[e, t]),
                    float(self.completion[e, t]),
                    float(self.time_spent[e, t]),
                    rating if rating > 0 else None,
                )

    @classmethod
    def empty(cls, horizon: int, mode: str = EVAL) -> "EpisodeLogs":
        z = np.zeros((0, horizon))
        zi = np.zeros((0, horizon), dtype=np.int64)
        truth = GroundTruth(z.copy(), zi.astype(bool), zi.astype(bool)) if mode == EVAL else None
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), zi, zi.copy(), z, z.copy(), z.copy(), zi.copy(), mode, truth)


def episode_rng(seed: int, stream: int, episode: int) -> np.random.Generator:
    """Independent generator per (seed, stream, episode); order of generation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, episode)))


LOG_STREAM, EVAL_STREAM = 1, 2


def generate_logs(
    world: SimWorld,
    policy: BehaviorPolicy,
    n_episodes: int,
    seed: int,
    stream: int = LOG_STREAM,
    first_episode: int = 0,
    chunk: int = 1000,
) -> EpisodeLogs:
    """Roll ``policy`` through the simulator and record every step.

    Propensities are the exact single-draw probabilities of the sampled
    items under ``policy``. The returned logs are in evaluation mode.
    """
    cfg = world.config
    H = cfg.horizon
    if n_episodes == 0:
        return EpisodeLogs.empty(H)
    parts = []
    for lo in range(first_episode, first_episode + n_episodes, chunk):
        hi = min(lo + chunk, first_episode + n_episodes)
        parts.append(_rollout_chunk(world, policy, np.arange(lo, hi), seed, stream))
    if len(parts) == 1:
        return parts[0]
    cat = lambda k: np.concatenate([getattr(p, k) for p in parts])  # noqa: E731
    tcat = lambda k: np.concatenate([getattr(p._truth, k) for p in parts])  # noqa: E731
    return EpisodeLogs(
        cat("episode_id"), cat("user_id"), cat("context"), cat("item"), cat("propensity"),
        cat("completion"), cat("time_spent"), cat("survey"), EVAL,
        GroundTruth(tcat("true_sat_prob"), tcat("like"), tcat("dislike")),
    )


def _rollout_chunk(world: SimWorld, policy: BehaviorPolicy, episodes: np.ndarray, seed: int, stream: int) -> EpisodeLogs:
    cfg = world.config
    H, n = cfg.horizon, len(episodes)
    users = np.empty(n, dtype=np.int64)
    noise = {k: np.empty((n, H)) for k in ("action_u", "eps_e", "eps_s", "survey_u", "rating_noise", "post_u")}
    for i, e in enumerate(episodes):
        rng = episode_rng(seed, stream, int(e))
        users[i] = rng.integers(cfg.n_users)
        for k, v in draw_step_noise(rng, (H,)).items():
            noise[k][i] = v
    interest = world.user_interest[users].copy()
    contexts = np.repeat(world.user_context[users][:, None], H, axis=1)
    out = {k: np.zeros((n, H)) for k in ("propensity", "completion", "time_spent", "sat")}
    item = np.zeros((n, H), dtype=np.int64)
    survey = np.zeros((n, H), dtype=np.int64)
    like = np.zeros((n, H), dtype=bool)
    dislike = np.zeros((n, H), dtype=bool)
    session = policy.session(n)
    for t in range(H):
        probs = session.probs(t, contexts[:, t])
        cdf = np.cumsum(probs, axis=1)
        u = noise["action_u"][:, t] * cdf[:, -1]
        a = np.minimum((cdf <= u[:, None]).sum(axis=1), world.n_items - 1)
        prop = probs[np.arange(n), a]
        if np.any(prop <= 0):
            raise RuntimeError("behavior policy sampled a zero-propensity action")
        res = step_batch(world, interest, a, {k: v[:, t] for k, v in noise.items()})
        item[:, t] = a
        out["propensity"][:, t] = prop
        out["completion"][:, t] = res["engagement"]
        out["time_spent"][:, t] = res["time_spent_sec"]
        out["sat"][:, t] = res["true_sat_prob"]
        survey[:, t] = res["rating"]
        like[:, t], dislike[:, t] = res["like"], res["dislike"]
        interest = res["next_interest"]
        session.observe(a, res["engagement"])
    return EpisodeLogs(
        episodes.astype(np.int64), users, contexts, item, out["propensity"], out["completion"],
        out["time_spent"], survey, EVAL, GroundTruth(out["sat"], like, dislike),
    )


# -- JSON lines --------------------------------------------------------------
def write_logs(logs: EpisodeLogs, path) -> None:
    """One JSON object per step; the ``eval`` section is written only for eval-mode logs."""
    truth = logs._truth if logs.mode == EVAL else None
    with open(path, "w") as fh:
        for e in range(logs.n_episodes):
            for t in range(logs.horizon):
                rec = {
                    "episode_id": int(logs.episode_id[e]),
                    "user_id": int(logs.user_id[e]),
                    "step": t,
                    "context_id": int(logs.context[e, t]),
                    "item_id": int(logs.item[e, t]),
                    "propensity": float(logs.propensity[e, t]),
                    "completion_ratio": float(logs.completion[e, t]),
                    "time_spent_sec": float(logs.time_spent[e, t]),
                }
                if logs.survey[e, t] > 0:
                    rec["survey_rating"] = int(logs.survey[e, t])
                if truth is not None:
                    ev = {"true_sat_prob": float(truth.true_sat_prob[e, t])}
                    if truth.like[e, t]:
                        ev["like"] = True
                    if truth.dislike[e, t]:
                        ev["dislike"] = True
                    rec["eval"] = ev
                fh.write(json.dumps(rec) + "\n")


def read_logs(path, mode: str = TRAIN) -> EpisodeLogs:
    """Parse a JSON-lines log. In ``train`` mode the eval section is discarded unread."""
    if mode not in (TRAIN, EVAL):
        raise DataError(f"unknown reader mode {mode!r}")
    episodes: dict[int, list[dict]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if mode == TRAIN:
                rec.pop("eval", None)
            elif "eval" not in rec:
                raise DataError(f"{path}:{lineno}: eval section missing")
            episodes.setdefault(int(rec["episode_id"]), []).append(rec)
    if not episodes:
        return EpisodeLogs.empty(0, mode)
    ids = sorted(episodes)
    H = len(episodes[ids[0]])
    if any(len(episodes[i]) != H for i in ids):
        raise DataError(f"{path}: episodes have differing lengths")
    n = len(ids)
    arr = lambda dtype: np.zeros((n, H), dtype=dtype)  # noqa: E731
    ctx, item, survey = arr(np.int64), arr(np.int64), arr(np.int64)
    prop, comp, ts = arr(float), arr(float), arr(float)
    sat, like, dislike = arr(float), arr(bool), arr(bool)
    users = np.zeros(n, dtype=np.int64)
    for i, e in enumerate(ids):
        for rec in sorted(episodes[e], key=lambda r: r["step"]):
            t = rec["step"]
            users[i] = rec.get("user_id", e)
            ctx[i, t], item[i, t] = rec["context_id"], rec["item_id"]
            prop[i, t], comp[i, t], ts[i, t] = rec["propensity"], rec["completion_ratio"], rec["time_spent_sec"]
            survey[i, t] = rec.get("survey_rating") or 0
            if mode == EVAL:
                ev = rec["eval"]
                sat[i, t] = ev["true_sat_prob"]
                like[i, t], dislike[i, t] = bool(ev.get("like")), bool(ev.get("dislike"))
    truth = GroundTruth(sat, like, dislike) if mode == EVAL else None
    return EpisodeLogs(np.array(ids, dtype=np.int64), users, ctx, item, prop, comp, ts, survey, mode, truth)
