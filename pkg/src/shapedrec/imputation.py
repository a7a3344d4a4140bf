"""Satisfaction-imputation head trained on sparse survey labels.

The head reads the shared-bottom embeddings through stop-gradient nodes, so
training it never changes the policy or the shared bottom. Negatives can be
up-weighted to counter the positive skew of survey responses; predictions
are then mapped back with :func:`calibrate`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, EvaluationError
from .nn import MLP, Embedding, ParamStore, Tensor, bce_with_logits, concat, no_grad, stop_gradient
from .nn import tensor as T
from .policy import PolicyModel
from .sim.logs import EpisodeLogs

HEAD_PREFIX = "impute/"

# feature groups: u_s, v_a, a head-owned creator embedding, log time spent
FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "time-only": ("time",),
    "item-only": ("item",),
    "item+creator": ("item", "creator"),
    "item+creator+time": ("item", "creator", "time"),
    "state-only": ("state",),
    "state+item": ("state", "item"),
    "state+action": ("state", "item", "creator", "time"),
}
TIME_SCALE = 7.0


@dataclass(frozen=True)
class ImbalanceConfig:
    negative_class_weight: float = 3.0
    calibrate: bool = True

    def __post_init__(self):
        w = self.negative_class_weight
        if not (np.isfinite(w) and w >= 1.0):
            raise ConfigurationError(f"negative_class_weight must be finite and >= 1, got {w}")


def label_from_survey(rating) -> np.ndarray | int:
    """1 for ratings 4-5 (satisfying), 0 for 1-3."""
    r = np.asarray(rating)
    if np.any((r < 1) | (r > 5)) or not np.all(np.equal(np.mod(r, 1), 0)):
        raise DataError(f"survey rating outside 1..5: {rating}")
    out = (r >= 4).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def calibrate(p_tilde, w: float):
    """Undo the odds shift from weighting negatives by ``w``: ``w p / (w p + 1 - p)``."""
    p = np.asarray(p_tilde, dtype=np.float64)
    out = w * p / (w * p + (1.0 - p))
    return float(out) if out.ndim == 0 else out


def imputation_loss(logits: Tensor, labels, w: float) -> Tensor | None:
    """Mean logistic loss with negatives multiplied by ``w``; ``None`` for an empty batch."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        return None
    weights = np.where(labels > 0.5, 1.0, float(w))
    return bce_with_logits(logits, labels, weights).mean()


class ImputationHead:
    """ReLU stack over the chosen feature groups, ending in a single logit."""

    def __init__(
        self,
        model: PolicyModel,
        feature_set: str = "state+action",
        hidden: tuple[int, ...] = (64, 32),
        creator_dim: int = 8,
        seed: int = 0,
        zero_init: bool = False,
        name: str = HEAD_PREFIX,
        store: ParamStore | None = None,
    ):
        if feature_set not in FEATURE_SETS:
            raise ConfigurationError(f"unknown feature set {feature_set!r}; expected one of {sorted(FEATURE_SETS)}")
        self.model = model
        self.feature_set = feature_set
        self.groups = FEATURE_SETS[feature_set]
        self.prefix = name
        self.store = model.store if store is None else store
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
        d = model.config.state_dim
        width = 0
        width += d if "state" in self.groups else 0
        width += d if "item" in self.groups else 0
        width += 1 if "time" in self.groups else 0
        self.creator = None
        if "creator" in self.groups:
            self.creator = Embedding(self.store, name + "creator", model.config.n_creators, creator_dim, rng, zero=zero_init)
            width += creator_dim
        self.mlp = MLP(self.store, name + "mlp", width, tuple(hidden) + (1,), rng, final_linear=True, zero=zero_init)
        self.input_width = width

    def param_names(self) -> list[str]:
        return self.store.names(self.prefix)

    def features(self, states: Tensor, items, time_spent) -> Tensor:
        items = np.asarray(items, dtype=np.int64)
        parts = []
        if "state" in self.groups:
            parts.append(stop_gradient(states))
        if "item" in self.groups:
            parts.append(stop_gradient(T.take_rows(self.model.action_table, items)))
        if "creator" in self.groups:
            parts.append(self.creator(self.model.item_creator[items]))
        if "time" in self.groups:
            ts = np.log1p(np.asarray(time_spent, dtype=np.float64)) / TIME_SCALE
            parts.append(Tensor(ts[:, None]))
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)

    def logit(self, states: Tensor, items, time_spent) -> Tensor:
        return self.mlp(self.features(states, items, time_spent))[:, 0]

    def predict(self, states, items, time_spent, imbalance: ImbalanceConfig | None = None) -> np.ndarray:
        """Satisfaction probability, calibrated when ``imbalance.calibrate`` is set."""
        with no_grad():
            s = states if isinstance(states, Tensor) else Tensor(states)
            p = T.sigmoid(self.logit(s, items, time_spent)).data
        if imbalance is not None and imbalance.calibrate:
            p = calibrate(p, imbalance.negative_class_weight)
        return p


def impute_satisfaction(head: ImputationHead, u_s: np.ndarray, item_id: int, time_spent_sec: float = 0.0) -> float:
    """Uncalibrated head output for a single (state, action) pair."""
    return float(head.predict(np.asarray(u_s, dtype=np.float64)[None, :], [item_id], [time_spent_sec])[0])


def labeled_steps(logs: EpisodeLogs) -> tuple[np.ndarray, np.ndarray]:
    """(episode, step) coordinates of survey-bearing steps, in row-major order."""
    return np.nonzero(logs.survey > 0)


def holdout_split(logs: EpisodeLogs, fraction: float, seed: int) -> tuple[EpisodeLogs, EpisodeLogs]:
    """Split episodes by user; held-out users all have at least one survey response."""
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"holdout fraction must be in (0, 1), got {fraction}")
    has_survey = (logs.survey > 0).any(axis=1)
    eligible = np.unique(logs.user_id[has_survey])
    if eligible.size == 0:
        raise EvaluationError("no users with survey responses to hold out")
    n_hold = int(round(fraction * eligible.size))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(13,)))
    held = np.sort(rng.choice(eligible, size=n_hold, replace=False))
    in_hold = np.isin(logs.user_id, held)
    return logs.subset(np.nonzero(~in_hold)[0]), logs.subset(np.nonzero(in_hold)[0])
