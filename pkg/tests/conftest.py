import numpy as np
import pytest

from shapedrec.imputation import ImputationHead
from shapedrec.policy import ModelConfig, PolicyModel
from shapedrec.sim import SimConfig, UniformPolicy, generate_logs, spawn_world

SMALL_SIM = SimConfig(n_items=30, n_users=40, n_creators=5, n_contexts=3, horizon=5, p_resp=0.3, seed=3)
SMALL_MODEL = dict(item_input_dim=4, hidden=5, context_dim=3, state_layers=(6, 4))


@pytest.fixture(scope="session")
def small_world():
    return spawn_world(SMALL_SIM)


@pytest.fixture(scope="session")
def small_logs(small_world):
    return generate_logs(small_world, UniformPolicy(SMALL_SIM.n_items), 120, seed=3)


def make_model(world, seed=0, **overrides):
    cfg = ModelConfig(
        n_items=world.config.n_items,
        n_contexts=world.config.n_contexts,
        n_creators=world.config.n_creators,
        **{**SMALL_MODEL, **overrides},
    )
    return PolicyModel(cfg, world.creator, seed=seed)


def make_head(model, **kw):
    kw.setdefault("hidden", (6,))
    kw.setdefault("creator_dim", 3)
    return ImputationHead(model, **kw)


def param_values(store, names):
    return {n: store[n].data.copy() for n in names}


def assert_same(a: dict, b: dict):
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k], err_msg=k)


def randomize(store, rng, scale=0.5):
    """Move every parameter to a random point; small-init gradients are too tiny to finite-difference."""
    for _, p in store.items():
        p.data[...] = rng.uniform(-scale, scale, size=p.data.shape)


def tiny_experiment(seeds=(0, 1), steps=30, warmup=10, **kw):
    """A seconds-scale experiment: small world, short schedule, gate open."""
    from dataclasses import replace as _replace

    from shapedrec.harness.config import ExperimentConfig, default_arms
    from shapedrec.trainer import TrainConfig

    train = TrainConfig(total_steps=steps, warmup_steps=warmup, eval_every=5, auc_gate=0.0, batch_size=8)
    arms = tuple(_replace(a, train=train, head_hidden=(8,)) for a in default_arms())
    sim = _replace(SMALL_SIM, n_items=40, n_users=60, horizon=6)
    return ExperimentConfig(sim=sim, model=dict(SMALL_MODEL), arms=arms, seeds=seeds, n_log_episodes=100, n_eval_episodes=40, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []), key=lambda s: int(s.split()[2]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
