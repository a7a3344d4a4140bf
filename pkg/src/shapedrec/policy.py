"""Shared-bottom sequence encoder and softmax policy head.

The shared bottom runs a GRU over the user's consumed items (oldest to
newest), concatenates the final hidden state with a context embedding and
maps the result through a ReLU stack to the user state ``u_s``. The policy
is ``softmax(u_s . v_a / T)`` over the whole catalog.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError
from .nn import MLP, Embedding, GRUCell, ParamStore, Tensor, concat, log_softmax, no_grad, softmax_temperature, stack
from .nn import tensor as T

SHARED_PREFIX = "bottom/"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_items: int
    n_contexts: int
    n_creators: int = 1
    item_input_dim: int = 16
    hidden: int = 32
    context_dim: int = 8
    state_layers: tuple[int, ...] = (64, 32)
    temperature: float = 1.0
    max_history: int = 50

    def __post_init__(self):
        if self.n_items < 1 or self.n_contexts < 1:
            raise ConfigurationError("catalog and context counts must be positive")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        if self.max_history < 1:
            raise ConfigurationError("max_history must be >= 1")
        object.__setattr__(self, "state_layers", tuple(int(s) for s in self.state_layers))

    @property
    def state_dim(self) -> int:
        return self.state_layers[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class InteractionEvent:
    item_id: int
    engagement: float
    time_spent_sec: float = 0.0
    context_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.engagement <= 1.0:
            raise DataError(f"completion ratio {self.engagement} outside [0, 1]")


@dataclass
class PolicyModel:
    """Shared bottom (GRU + context + ReLU stack + action table) and the policy head."""

    config: ModelConfig
    item_creator: np.ndarray
    store: ParamStore = field(default_factory=ParamStore)
    seed: int = 0

    def __post_init__(self):
        cfg = self.config
        self.item_creator = np.asarray(self.item_creator, dtype=np.int64)
        if self.item_creator.shape != (cfg.n_items,):
            raise ConfigurationError("item_creator must have one entry per catalog item")
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(7,)))
        p = SHARED_PREFIX
        self.item_in = Embedding(self.store, p + "item_in", cfg.n_items, cfg.item_input_dim, rng)
        self.gru = GRUCell(self.store, p + "gru", cfg.item_input_dim + 1, cfg.hidden, rng)
        self.context = Embedding(self.store, p + "context", cfg.n_contexts, cfg.context_dim, rng)
        self.state_mlp = MLP(self.store, p + "state", cfg.hidden + cfg.context_dim, cfg.state_layers, rng)
        self.action = Embedding(self.store, p + "action", cfg.n_items, cfg.state_dim, rng)

    # -- parameters -------------------------------------------------------
    @property
    def action_table(self) -> Tensor:
        return self.action.table

    def shared_names(self) -> list[str]:
        return self.store.names(SHARED_PREFIX)

    # -- encoder ----------------------------------------------------------
    def _check_ids(self, items, contexts) -> None:
        items, contexts = np.asarray(items), np.asarray(contexts)
        if items.size and (items.min() < 0 or items.max() >= self.config.n_items):
            raise DataError("item id outside catalog")
        if contexts.size and (contexts.min() < 0 or contexts.max() >= self.config.n_contexts):
            raise DataError("unknown context id")

    def _step_input(self, items: np.ndarray, completions: np.ndarray) -> Tensor:
        """GRU input ``[item embedding, completion]``; works for ``[B]`` or ``[B, L]`` ids."""
        comp = np.asarray(completions, dtype=np.float64)[..., None]
        return concat([self.item_in(items), Tensor(comp)], axis=-1)

    def _run_gru(self, items: np.ndarray, completions: np.ndarray, h0: Tensor | None = None) -> Tensor:
        """Hidden states ``[B, L + 1, hidden]``; slot ``t`` has consumed ``t`` events."""
        n, L = items.shape
        h = h0 if h0 is not None else Tensor(np.zeros((n, self.config.hidden)))
        if L == 0:
            return T.reshape(h, (n, 1, self.config.hidden))
        return self.gru.sequence(self._step_input(items, completions), h)

    @staticmethod
    def _last(hs: Tensor) -> Tensor:
        return T.getitem(hs, (slice(None), -1))

    def _state_from_hidden(self, hidden: Tensor, contexts: np.ndarray) -> Tensor:
        return self.state_mlp(concat([hidden, self.context(contexts)], axis=1))

    def prefix_states(self, items, completions, contexts) -> Tensor:
        """User states for every step of a batch of episodes.

        Row ``b * H + t`` encodes episode ``b`` at step ``t``: the GRU has
        consumed steps ``0..t-1`` (at most ``max_history`` of them, newest
        kept) and the context is that of step ``t``.
        """
        items = np.asarray(items, dtype=np.int64)
        completions = np.asarray(completions, dtype=np.float64)
        contexts = np.asarray(contexts, dtype=np.int64)
        self._check_ids(items, contexts)
        B, H = items.shape
        L = self.config.max_history
        if H - 1 <= L:
            hidden = self._run_gru(items[:, : H - 1], completions[:, : H - 1])
        else:
            steps = []
            for t in range(H):
                lo = max(0, t - L)
                steps.append(self._last(self._run_gru(items[:, lo:t], completions[:, lo:t])))
            hidden = stack(steps, axis=1)
        hid = T.reshape(hidden, (B * H, self.config.hidden))
        return self._state_from_hidden(hid, contexts.reshape(-1))

    def encode_state(self, history: Sequence[InteractionEvent], context_id: int) -> np.ndarray:
        """User state for one history (oldest first) and the current context."""
        history = list(history)[-self.config.max_history :]
        items = np.array([[e.item_id for e in history]], dtype=np.int64).reshape(1, -1)
        comps = np.array([[e.engagement for e in history]], dtype=np.float64).reshape(1, -1)
        self._check_ids(items, [context_id])
        with no_grad():
            h = self._last(self._run_gru(items, comps))
            return self._state_from_hidden(h, np.array([context_id])).data[0].copy()

    # -- policy head ------------------------------------------------------
    def logits(self, states: Tensor) -> Tensor:
        return states @ self.action_table.T

    def log_probs(self, states: Tensor) -> Tensor:
        return log_softmax(self.logits(states), self.config.temperature)

    def policy_probs(self, u_s: np.ndarray, temperature: float | None = None) -> np.ndarray:
        temperature = self.config.temperature if temperature is None else temperature
        return policy_probs(u_s, self.action_table.data, temperature)

    def session(self, n: int) -> "ModelSession":
        return ModelSession(self, n)

    def snapshot(self) -> "PolicyModel":
        """Independent copy with frozen parameter values."""
        clone = PolicyModel(self.config, self.item_creator.copy(), ParamStore(), self.seed)
        clone.store.load_values({k: v for k, v in self.store.values().items() if k in clone.store})
        return clone

    @property
    def n_items(self) -> int:
        return self.config.n_items


def policy_probs(u_s: np.ndarray, action_table: np.ndarray, temperature: float) -> np.ndarray:
    """``softmax(u_s . v_a / T)`` over the catalog; ``u_s`` may be one state or a batch."""
    u_s = np.asarray(u_s, dtype=np.float64)
    action_table = np.asarray(action_table, dtype=np.float64)
    if u_s.shape[-1] != action_table.shape[1]:
        raise ConfigurationError(f"state dim {u_s.shape[-1]} != action dim {action_table.shape[1]}")
    return softmax_temperature(u_s @ action_table.T, temperature)


class ModelSession:
    """Incremental rollout state for ``n`` users: probabilities then observed consumption."""

    def __init__(self, model: PolicyModel, n: int):
        self.model, self.n = model, n
        self.items: list[np.ndarray] = []
        self.completions: list[np.ndarray] = []
        self.hidden = Tensor(np.zeros((n, model.config.hidden)))

    def probs(self, t: int, contexts: np.ndarray) -> np.ndarray:
        with no_grad():
            u = self.model._state_from_hidden(self.hidden, np.asarray(contexts, dtype=np.int64))
            return self.model.policy_probs(u.data)

    def observe(self, items: np.ndarray, completions: np.ndarray) -> None:
        self.items.append(np.asarray(items, dtype=np.int64))
        self.completions.append(np.asarray(completions, dtype=np.float64))
        L = self.model.config.max_history
        with no_grad():
            if len(self.items) <= L:
                self.hidden = self.model.gru(self.hidden, self.model._step_input(self.items[-1], self.completions[-1]))
            else:
                it = np.stack(self.items[-L:], axis=1)
                co = np.stack(self.completions[-L:], axis=1)
                self.hidden = self.model._last(self.model._run_gru(it, co))


def sample_actions(probs: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``k`` distinct items by sequential sampling without replacement.

    Implemented with Gumbel top-k, which is distributed exactly like
    renormalize-and-redraw. Returns the items and the log of each item's
    single-draw probability.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"cannot draw {k} distinct items from a catalog of {n}")
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    keys = logp + rng.gumbel(size=n)
    order = np.lexsort((rng.random(n), -keys))
    chosen = order[:k]
    return chosen, logp[chosen]


# -- checkpoints -------------------------------------------------------------
def save_checkpoint(path, store: ParamStore, manifest: dict) -> None:
    """Parameters plus a JSON manifest in one ``.npz``; values round-trip bit-exactly."""
    man = dict(manifest, format="shapedrec-checkpoint", version=CHECKPOINT_VERSION, params=list(store))
    arrays = {f"p{i}": store[name].data for i, name in enumerate(store)}
    with open(path, "wb") as fh:
        np.savez(fh, __manifest__=np.array(json.dumps(man, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as z:
        man = json.loads(str(z["__manifest__"]))
        if man.get("format") != "shapedrec-checkpoint" or man.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        values = {name: z[f"p{i}"].copy() for i, name in enumerate(man["params"])}
    return man, values
