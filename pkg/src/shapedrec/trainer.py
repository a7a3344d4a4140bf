"""Off-policy REINFORCE with a jointly trained satisfaction-imputation head.

One optimizer step combines the importance-weighted policy-gradient
surrogate with the (weighted) imputation loss. Until the warm-up step count
has passed and the head's holdout AUC clears the gate, the policy is
trained on engagement alone.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, DataError, EvaluationError, TrainingError
from .imputation import ImbalanceConfig, ImputationHead, imputation_loss, label_from_survey
from .harness.metrics import auc_roc
from .nn import Tensor, adam_step, log_softmax_pick, no_grad
from .nn.tensor import getitem
from .policy import PolicyModel
from .reward import RewardConfig, shape_step_reward
from .sim.logs import EpisodeLogs

log = logging.getLogger(__name__)

CORRECTIONS = ("per_step", "per_decision")


@dataclass(frozen=True)
class TrainConfig:
    cap: float | None = 10.0
    topk: int = 0
    lambda_imp: float = 1.0
    warmup_steps: int = 2000
    auc_gate: float = 0.6
    batch_size: int = 32
    total_steps: int = 3000
    seed: int = 0
    learning_rate: float = 1e-3
    correction: str = "per_step"
    eval_every: int = 100
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.cap is not None and not self.cap >= 1.0:
            raise ConfigurationError(f"importance-weight cap must be >= 1, got {self.cap}")
        if self.lambda_imp < 0:
            raise ConfigurationError("lambda_imp must be >= 0")
        if self.warmup_steps < 0 or self.topk < 0:
            raise ConfigurationError("warmup_steps and topk must be >= 0")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ConfigurationError("batch_size must be >= 1 and total_steps >= 0")
        if self.correction not in CORRECTIONS:
            raise ConfigurationError(f"unknown correction {self.correction!r}; expected {CORRECTIONS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def importance_weight(pi_prob, beta_prob, cap: float | None = 10.0):
    """``min(pi / beta, cap)``; ``cap=None`` disables capping."""
    pi = np.asarray(pi_prob, dtype=np.float64)
    beta = np.asarray(beta_prob, dtype=np.float64)
    if np.any(beta <= 0):
        raise DataError("behavior propensity must be positive")
    w = pi / beta
    if cap is not None:
        w = np.minimum(w, cap)
    return float(w) if w.ndim == 0 else w


def topk_multiplier(pi_prob, k: int):
    """Top-K correction factor ``K (1 - pi)^(K-1)``; identically 1 for ``K = 1``."""
    if k < 1:
        raise ConfigurationError("K must be >= 1")
    pi = np.asarray(pi_prob, dtype=np.float64)
    out = k * (1.0 - pi) ** (k - 1)
    return float(out) if out.ndim == 0 else out


def reward_to_go(rewards, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = np.zeros(r.shape[:-1])
    for t in range(r.shape[-1] - 1, -1, -1):
        acc = r[..., t] + gamma * acc
        out[..., t] = acc
    return out


def reinforce_coefficients(
    rewards: np.ndarray,
    pi_taken: np.ndarray,
    beta_taken: np.ndarray,
    gamma: float,
    cap: float | None = 10.0,
    topk: int = 0,
    correction: str = "per_step",
) -> np.ndarray:
    """Per-step multipliers of ``grad log pi(a_t|s_t)`` for a batch of episodes.

    ``per_step`` weights the reward-to-go at ``t`` by the single ratio
    ``pi_t / beta_t``. ``per_decision`` weights each reward ``r_k`` by the
    ratio product over steps ``0..k``, which keeps the estimator unbiased on
    multi-step problems at the price of variance.
    """
    ratio = importance_weight(pi_taken, beta_taken, cap)
    if correction == "per_step":
        coef = ratio * reward_to_go(rewards, gamma)
    elif correction == "per_decision":
        coef = reward_to_go(np.cumprod(ratio, axis=-1) * rewards, gamma)
    else:
        raise ConfigurationError(f"unknown correction {correction!r}")
    if topk >= 1:
        coef = coef * topk_multiplier(pi_taken, topk)
    return coef


def policy_objective(logp_taken: Tensor, coef: np.ndarray, normalizer: float) -> Tensor:
    """Surrogate whose gradient is ``sum coef * grad log pi / normalizer``."""
    return (logp_taken * np.asarray(coef).reshape(logp_taken.shape)).sum() * (1.0 / normalizer)


@dataclass
class StepStats:
    step: int
    policy_objective: float
    imputation_loss: float | None
    n_labels: int
    shaped: bool
    mean_reward: float
    holdout_auc: float | None = None


@dataclass
class Trainer:
    model: PolicyModel
    head: ImputationHead
    reward: RewardConfig
    config: TrainConfig = field(default_factory=TrainConfig)
    imbalance: ImbalanceConfig = field(default_factory=ImbalanceConfig)
    holdout: EpisodeLogs | None = None
    # extra (head, imbalance) pairs trained on the same batches; they never feed the reward
    probes: list = field(default_factory=list)

    def __post_init__(self):
        self.step = 0
        self.holdout_auc: float | None = None
        self.head_aucs: dict[str, float | None] = {}
        self.skipped_imputation_batches = 0
        self.history: list[StepStats] = []
        self._rng = np.random.default_rng(np.random.SeedSequence(self.config.seed, spawn_key=(17,)))

    # -- gating -----------------------------------------------------------
    def shaping_active(self) -> bool:
        if not self.reward.use_imputed_satisfaction:
            return False
        if self.step < self.config.warmup_steps:
            return False
        if self.config.auc_gate > 0:
            return self.holdout_auc is not None and self.holdout_auc >= self.config.auc_gate
        return True

    def evaluate_holdout(self) -> float | None:
        """Holdout AUC of the main head (stored as ``holdout_auc``) and of every probe."""
        if self.holdout is None:
            return None
        sub, states = self._labeled_states(self.holdout)
        for head in [self.head] + [h for h, _ in self.probes]:
            self.head_aucs[head.prefix] = _safe_auc(*self._score(sub, states, head))
        self.holdout_auc = self.head_aucs[self.head.prefix]
        return self.holdout_auc

    def head_auc(self, logs: EpisodeLogs, head: ImputationHead | None = None) -> float | None:
        return _safe_auc(*self.holdout_scores(logs, head))

    def holdout_scores(self, logs: EpisodeLogs, head: ImputationHead | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Uncalibrated head scores and survey labels at every labeled step of ``logs``."""
        return self._score(*self._labeled_states(logs), head or self.head)

    def _labeled_states(self, logs: EpisodeLogs) -> tuple[EpisodeLogs, np.ndarray | None]:
        sub = logs.subset(np.nonzero((logs.survey > 0).any(axis=1))[0])
        if sub.n_episodes == 0:
            return sub, None
        with no_grad():
            states = self.model.prefix_states(sub.item, sub.completion, sub.context).data
        e, t = np.nonzero(sub.survey > 0)
        return sub, states[e * sub.horizon + t]

    @staticmethod
    def _score(sub: EpisodeLogs, states: np.ndarray | None, head: ImputationHead) -> tuple[np.ndarray, np.ndarray]:
        if states is None:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        e, t = np.nonzero(sub.survey > 0)
        scores = head.predict(Tensor(states), sub.item[e, t], sub.time_spent[e, t])
        return scores, label_from_survey(sub.survey[e, t])

    # -- gradient pieces --------------------------------------------------
    def _forward(self, batch: EpisodeLogs):
        states = self.model.prefix_states(batch.item, batch.completion, batch.context)
        logp = log_softmax_pick(self.model.logits(states), batch.item.reshape(-1), self.model.config.temperature)
        return states, logp

    def shaped_rewards(self, batch: EpisodeLogs, states: Tensor) -> tuple[np.ndarray, bool]:
        r_e = batch.completion
        active = self.shaping_active()
        if not active:
            return np.array(r_e, dtype=np.float64, copy=True), False
        p = self.head.predict(Tensor(states.data), batch.item.reshape(-1), batch.time_spent.reshape(-1), self.imbalance)
        return shape_step_reward(r_e, p.reshape(r_e.shape), self.reward), True

    def _policy_part(self, batch: EpisodeLogs, states: Tensor, logp: Tensor):
        rewards, active = self.shaped_rewards(batch, states)
        pi = np.exp(logp.data).reshape(batch.item.shape)
        coef = reinforce_coefficients(
            rewards, pi, batch.propensity, self.reward.gamma, self.config.cap, self.config.topk, self.config.correction
        )
        return policy_objective(logp, coef, logp.shape[0]), rewards, active, coef

    def _imputation_part(self, batch: EpisodeLogs, states: Tensor) -> tuple[Tensor | None, Tensor | None, int]:
        """Main-head loss, that loss plus any probe losses, and the label count."""
        e, t = np.nonzero(batch.survey > 0)
        if e.size == 0:
            return None, None, 0
        flat = e * batch.horizon + t
        picked = getitem(states, flat)
        items, spent = batch.item[e, t], batch.time_spent[e, t]
        labels = label_from_survey(batch.survey[e, t])
        main = imputation_loss(self.head.logit(picked, items, spent), labels, self.imbalance.negative_class_weight)
        total = main
        for head, imb in self.probes:
            total = total + imputation_loss(head.logit(picked, items, spent), labels, imb.negative_class_weight)
        return main, total, e.size

    def _apply(self, objective: Tensor | None) -> None:
        """Ascend ``objective`` with Adam. Parameters it does not reach are left untouched."""
        self.model.store.zero_grad()
        if objective is None:
            return
        loss = -1.0 * objective
        loss.backward()
        try:
            adam_step(self.model.store, self.config.learning_rate)
        except TrainingError as exc:
            raise TrainingError(f"step {self.step}: {exc}") from exc

    # -- public updates ---------------------------------------------------
    def reinforce_update(self, batch: EpisodeLogs) -> float:
        """Policy-gradient step only. Returns the surrogate value."""
        if batch.n_episodes == 0:
            raise DataError("empty batch")
        states, logp = self._forward(batch)
        obj, *_ = self._policy_part(batch, states, logp)
        self._apply(obj)
        return obj.item()

    def imputation_update(self, batch: EpisodeLogs) -> float | None:
        """Imputation-head step only; the shared bottom and policy are untouched."""
        with no_grad():
            states = self.model.prefix_states(batch.item, batch.completion, batch.context)
        main, total, _ = self._imputation_part(batch, states)
        if main is None:
            self.skipped_imputation_batches += 1
            return None
        self._apply(-1.0 * total)
        return main.item()

    def multitask_step(self, batch: EpisodeLogs) -> StepStats:
        """One optimizer step on ``policy objective - lambda_imp * imputation loss``."""
        states, logp = self._forward(batch)
        obj, rewards, active, _ = self._policy_part(batch, states, logp)
        imp, imp_total, n_labels = self._imputation_part(batch, states)
        total = obj
        if imp is None:
            self.skipped_imputation_batches += 1
        elif self.config.lambda_imp > 0:
            total = obj + (-self.config.lambda_imp) * imp_total
        self._apply(total)
        stats = StepStats(
            step=self.step,
            policy_objective=obj.item(),
            imputation_loss=None if imp is None else imp.item(),
            n_labels=n_labels,
            shaped=active,
            mean_reward=float(rewards.mean()),
        )
        self.step += 1
        if self.holdout is not None and self.config.eval_every > 0 and self.step % self.config.eval_every == 0:
            stats.holdout_auc = self.evaluate_holdout()
        self.history.append(stats)
        return stats

    def sample_batch(self, logs: EpisodeLogs) -> EpisodeLogs:
        rows = np.sort(self._rng.choice(logs.n_episodes, size=min(self.config.batch_size, logs.n_episodes), replace=False))
        return logs.subset(rows)

    def fit(self, logs: EpisodeLogs, steps: int | None = None) -> list[StepStats]:
        if logs.n_episodes == 0:
            raise DataError("no training episodes")
        logs = logs.training_view()
        steps = self.config.total_steps if steps is None else steps
        for _ in range(steps):
            stats = self.multitask_step(self.sample_batch(logs))
            if stats.holdout_auc is not None:
                log.debug("step %d auc %.4f shaped=%s", stats.step, stats.holdout_auc, stats.shaped)
        return self.history


def _safe_auc(scores, labels) -> float | None:
    try:
        return auc_roc(scores, labels)
    except EvaluationError:
        return None
