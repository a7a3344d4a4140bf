"""Small tabular MDPs with a softmax policy, for checking policy-gradient estimators.

:func:`exact_policy_gradient` enumerates every trajectory, so it is only
usable on tiny problems. :func:`reinforce_estimate` samples trajectories
from a behavior policy and runs them through the same coefficient code the
trainer uses.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nn import softmax_temperature
from .trainer import reinforce_coefficients

MAX_TRAJECTORIES = 10_000


@dataclass(frozen=True)
class TabularMDP:
    """``initial[s]``, ``transition[s, a, s']`` and deterministic ``reward[s, a]``."""

    initial: np.ndarray
    transition: np.ndarray
    reward: np.ndarray
    horizon: int

    def __post_init__(self):
        p0 = np.asarray(self.initial, dtype=np.float64)
        P = np.asarray(self.transition, dtype=np.float64)
        R = np.asarray(self.reward, dtype=np.float64)
        S, A = R.shape
        if p0.shape != (S,) or P.shape != (S, A, S):
            raise ConfigurationError("initial, transition and reward shapes disagree")
        if not (np.isclose(p0.sum(), 1.0) and np.allclose(P.sum(axis=-1), 1.0)):
            raise ConfigurationError("initial and transition rows must be distributions")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        for name, value in (("initial", p0), ("transition", P), ("reward", R)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @classmethod
    def random(cls, n_states: int, n_actions: int, horizon: int, seed: int = 0) -> "TabularMDP":
        rng = np.random.default_rng(seed)
        return cls(
            initial=rng.dirichlet(np.ones(n_states)),
            transition=rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
            reward=rng.uniform(0.0, 1.0, size=(n_states, n_actions)),
            horizon=horizon,
        )


def tabular_policy(theta: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of the ``[S, A]`` logit table."""
    return softmax_temperature(np.asarray(theta, dtype=np.float64), temperature)


def _score(theta_shape, states, actions, pi) -> np.ndarray:
    """``grad_theta log pi(a_t | s_t)`` for each step: ``[..., H, S, A]``."""
    S, A = theta_shape
    g = np.zeros(states.shape + (S, A))
    idx = np.indices(states.shape)
    g[(*idx, states)] = -pi[states]
    g[(*idx, states, actions)] += 1.0
    return g


def enumerate_trajectories(mdp: TabularMDP, policy: np.ndarray):
    """All ``(states, actions, probability)`` triples with nonzero probability."""
    S, A, H = mdp.n_states, mdp.n_actions, mdp.horizon
    count = (S * A) ** H
    if count > MAX_TRAJECTORIES:
        raise ConfigurationError(f"{count} trajectories exceed the enumeration bound {MAX_TRAJECTORIES}")
    out_s, out_a, out_p = [], [], []
    for path in itertools.product(range(S * A), repeat=H):
        s, a = np.divmod(np.array(path), A)
        p = mdp.initial[s[0]]
        for t in range(H):
            p *= policy[s[t], a[t]]
            if t + 1 < H:
                p *= mdp.transition[s[t], a[t], s[t + 1]]
        if p > 0:
            out_s.append(s)
            out_a.append(a)
            out_p.append(p)
    return np.array(out_s), np.array(out_a), np.array(out_p)


def expected_return(mdp: TabularMDP, theta: np.ndarray, gamma: float = 1.0) -> float:
    s, a, p = enumerate_trajectories(mdp, tabular_policy(theta))
    disc = gamma ** np.arange(mdp.horizon)
    return float(np.sum(p * (mdp.reward[s, a] * disc).sum(axis=1)))


def exact_policy_gradient(mdp: TabularMDP, theta: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """``grad E[sum_t gamma^t r_t]`` by summing over every trajectory."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != mdp.reward.shape:
        raise ConfigurationError(f"theta shape {theta.shape} != {mdp.reward.shape}")
    pi = tabular_policy(theta)
    s, a, p = enumerate_trajectories(mdp, pi)
    disc = gamma ** np.arange(mdp.horizon)
    ret = (mdp.reward[s, a] * disc).sum(axis=1)
    score = _score(theta.shape, s, a, pi).sum(axis=1)
    return np.einsum("n,n,nij->ij", p, ret, score)


def sample_trajectories(mdp: TabularMDP, policy: np.ndarray, n: int, rng: np.random.Generator):
    """``n`` trajectories from ``policy``: states, actions and per-step propensities."""
    H = mdp.horizon
    states = np.empty((n, H), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    s = _draw(np.broadcast_to(mdp.initial, (n, mdp.n_states)), rng)
    for t in range(H):
        states[:, t] = s
        a = _draw(policy[s], rng)
        actions[:, t] = a
        s = _draw(mdp.transition[s, a], rng)
    return states, actions, policy[states, actions]


def _draw(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((u >= cdf).sum(axis=1), probs.shape[1] - 1)


def reinforce_samples(
    mdp: TabularMDP,
    theta: np.ndarray,
    behavior: np.ndarray,
    n: int,
    seed: int = 0,
    gamma: float = 1.0,
    cap: float | None = None,
    correction: str = "per_decision",
) -> np.ndarray:
    """Per-trajectory importance-weighted gradient estimates, shape ``[n, S, A]``."""
    theta = np.asarray(theta, dtype=np.float64)
    pi = tabular_policy(theta)
    rng = np.random.default_rng(seed)
    s, a, beta = sample_trajectories(mdp, np.asarray(behavior, dtype=np.float64), n, rng)
    coef = reinforce_coefficients(mdp.reward[s, a], pi[s, a], beta, gamma, cap, 0, correction)
    return np.einsum("nt,ntij->nij", coef, _score(theta.shape, s, a, pi))


def reinforce_estimate(mdp, theta, behavior, n, seed=0, gamma=1.0, cap=None, correction="per_decision"):
    """Sample mean and standard error of the estimator, each ``[S, A]``."""
    g = reinforce_samples(mdp, theta, behavior, n, seed, gamma, cap, correction)
    return g.mean(axis=0), g.std(axis=0, ddof=1) / np.sqrt(n)
