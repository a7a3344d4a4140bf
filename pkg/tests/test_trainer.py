from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import assert_same, make_head, make_model, param_values
from shapedrec.errors import ConfigurationError, DataError, TrainingError
from shapedrec.imputation import ImbalanceConfig
from shapedrec.nn import Tensor
from shapedrec.reward import RewardConfig
from shapedrec.trainer import (
    TrainConfig,
    Trainer,
    importance_weight,
    policy_objective,
    reinforce_coefficients,
    topk_multiplier,
)

QUIET = dict(eval_every=0, batch_size=8, learning_rate=1e-2)


def make_trainer(world, logs=None, reward=None, seed=0, holdout=None, **train):
    model = make_model(world, seed=seed)
    head = make_head(model, seed=seed)
    cfg = TrainConfig(**{**QUIET, "warmup_steps": 0, "auc_gate": 0.0, "seed": seed, **train})
    return Trainer(model, head, reward or RewardConfig(), cfg, holdout=holdout)


# -- scalar pieces ---------------------------------------------------------------
def test_importance_weight_examples():
    assert importance_weight(0.2, 0.2) == 1.0
    assert importance_weight(0.6, 0.3, cap=10) == pytest.approx(2.0)
    assert importance_weight(0.9, 0.03, cap=10) == 10.0
    assert importance_weight(0.9, 0.03, cap=None) == pytest.approx(30.0)


@pytest.mark.parametrize("beta", [0.0, -0.1])
def test_importance_weight_rejects_nonpositive_propensity(beta):
    with pytest.raises(DataError):
        importance_weight(0.5, beta)


def test_topk_examples():
    assert topk_multiplier(0.37, 1) == 1.0
    assert topk_multiplier(0.5, 2) == pytest.approx(1.0)
    assert topk_multiplier(1.0, 2) == 0.0
    with pytest.raises(ConfigurationError):
        topk_multiplier(0.5, 0)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 16))
def test_topk_non_increasing_in_pi(p, q, k):
    lo, hi = sorted((p, q))
    assert topk_multiplier(lo, k) >= topk_multiplier(hi, k)


def test_per_step_coefficients_match_loop_oracle():
    rng = np.random.default_rng(0)
    r = rng.uniform(size=(4, 6))
    pi = rng.uniform(0.01, 0.5, size=(4, 6))
    beta = rng.uniform(0.01, 0.5, size=(4, 6))
    gamma = 0.8
    coef = reinforce_coefficients(r, pi, beta, gamma, cap=3.0, topk=2)
    for e in range(4):
        for t in range(6):
            ret = sum(gamma ** (k - t) * r[e, k] for k in range(t, 6))
            w = min(pi[e, t] / beta[e, t], 3.0)
            assert coef[e, t] == pytest.approx(w * ret * 2 * (1 - pi[e, t]))


def test_per_decision_coefficients_match_loop_oracle():
    rng = np.random.default_rng(1)
    r = rng.uniform(size=(3, 4))
    pi = rng.uniform(0.1, 0.9, size=(3, 4))
    beta = rng.uniform(0.1, 0.9, size=(3, 4))
    coef = reinforce_coefficients(r, pi, beta, 0.9, cap=None, correction="per_decision")
    for e in range(3):
        for t in range(4):
            want = sum(0.9 ** (k - t) * np.prod(pi[e, : k + 1] / beta[e, : k + 1]) * r[e, k] for k in range(t, 4))
            assert coef[e, t] == pytest.approx(want)


def test_policy_objective_gradient():
    logp = Tensor(np.array([-1.0, -2.0, -0.5]), requires_grad=True)
    coef = np.array([0.5, 2.0, -1.0])
    policy_objective(logp, coef, normalizer=4.0).backward()
    np.testing.assert_allclose(logp.grad, coef / 4.0)


@pytest.mark.parametrize(
    "kw",
    [dict(cap=0.5), dict(lambda_imp=-1), dict(warmup_steps=-1), dict(batch_size=0), dict(correction="nope"), dict(topk=-2)],
)
def test_train_config_validation(kw):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kw)


def test_train_config_round_trip():
    cfg = TrainConfig(cap=None, topk=3, seed=5)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigurationError):
        TrainConfig.from_dict({"bogus": 1})


# -- updates ---------------------------------------------------------------------
def test_zero_reward_leaves_parameters_unchanged(small_world, small_logs):
    logs = small_logs.training_view()
    zero = replace(logs, completion=np.zeros_like(logs.completion))
    tr = make_trainer(small_world, reward=RewardConfig.engagement_only())
    before = tr.model.store.values()
    tr.reinforce_update(zero.subset(np.arange(8)))
    assert_same(before, tr.model.store.values())


def test_reinforce_update_moves_policy_only(small_world, small_logs):
    tr = make_trainer(small_world, reward=RewardConfig.engagement_only())
    head_before = param_values(tr.model.store, tr.head.param_names())
    bottom_before = param_values(tr.model.store, tr.model.shared_names())
    tr.reinforce_update(small_logs.training_view().subset(np.arange(8)))
    assert_same(head_before, param_values(tr.model.store, tr.head.param_names()))
    after = param_values(tr.model.store, tr.model.shared_names())
    assert any(not np.array_equal(after[k], bottom_before[k]) for k in after)


def test_imputation_update_leaves_shared_bottom_bit_identical(small_world, small_logs):
    tr = make_trainer(small_world)
    bottom = param_values(tr.model.store, tr.model.shared_names())
    head = param_values(tr.model.store, tr.head.param_names())
    logs = small_logs.training_view()
    for i in range(20):
        tr.imputation_update(tr.sample_batch(logs))
    assert_same(bottom, param_values(tr.model.store, tr.model.shared_names()))
    after = param_values(tr.model.store, tr.head.param_names())
    assert any(not np.array_equal(after[k], head[k]) for k in after)


def test_lambda_zero_freezes_head(small_world, small_logs):
    tr = make_trainer(small_world, lambda_imp=0.0)
    head = param_values(tr.model.store, tr.head.param_names())
    tr.fit(small_logs, steps=5)
    assert_same(head, param_values(tr.model.store, tr.head.param_names()))


def test_batch_without_surveys_still_updates_policy(small_world, small_logs):
    logs = small_logs.training_view()
    blank = replace(logs, survey=np.zeros_like(logs.survey)).subset(np.arange(8))
    tr = make_trainer(small_world)
    before = param_values(tr.model.store, tr.model.shared_names())
    stats = tr.multitask_step(blank)
    assert stats.imputation_loss is None and stats.n_labels == 0
    assert tr.skipped_imputation_batches == 1
    after = param_values(tr.model.store, tr.model.shared_names())
    assert any(not np.array_equal(after[k], before[k]) for k in after)
    assert tr.imputation_update(blank) is None


def test_fixed_seed_training_is_reproducible(small_world, small_logs):
    runs = []
    for _ in range(2):
        tr = make_trainer(small_world, seed=4)
        tr.fit(small_logs, steps=6)
        runs.append(tr.model.store.values())
    assert_same(*runs)


def test_empty_inputs_rejected(small_world, small_logs):
    tr = make_trainer(small_world)
    with pytest.raises(DataError):
        tr.fit(small_logs.subset(np.array([], dtype=np.int64)))
    with pytest.raises(DataError):
        tr.reinforce_update(small_logs.subset(np.array([], dtype=np.int64)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_aborts(small_world, small_logs):
    tr = make_trainer(small_world)
    logs = small_logs.training_view()
    bad = replace(logs, completion=np.full_like(logs.completion, np.inf)).subset(np.arange(4))
    with pytest.raises(TrainingError, match="non-finite"):
        tr.reinforce_update(bad)


# -- warm-up ---------------------------------------------------------------------
def test_rewards_are_engagement_only_during_warmup(small_world, small_logs):
    tr = make_trainer(small_world, warmup_steps=3)
    logs = small_logs.training_view()
    for _ in range(3):
        batch = tr.sample_batch(logs)
        states, _ = tr._forward(batch)
        rewards, active = tr.shaped_rewards(batch, states)
        assert not active
        np.testing.assert_array_equal(rewards, batch.completion)
        tr.multitask_step(batch)
    batch = tr.sample_batch(logs)
    rewards, active = tr.shaped_rewards(batch, tr._forward(batch)[0])
    assert active
    assert np.all(rewards <= batch.completion)


def test_auc_gate_blocks_shaping_until_met(small_world, small_logs):
    tr = make_trainer(small_world, warmup_steps=0, auc_gate=0.6, holdout=small_logs.training_view())
    assert not tr.shaping_active()  # never evaluated
    tr.holdout_auc = 0.55
    assert not tr.shaping_active()
    tr.holdout_auc = 0.6
    assert tr.shaping_active()
    tr.reward = RewardConfig.engagement_only()
    assert not tr.shaping_active()


def test_evaluate_holdout_reports_auc(small_world, small_logs):
    tr = make_trainer(small_world, holdout=small_logs.training_view(), eval_every=2)
    tr.fit(small_logs, steps=4)
    assert 0.0 <= tr.holdout_auc <= 1.0
    assert [s.holdout_auc is not None for s in tr.history] == [False, True, False, True]


def test_probe_heads_train_exactly_like_separate_runs(small_world, small_logs):
    """A probe head follows the same trajectory it would as the main head of its own run."""
    reward = RewardConfig.engagement_only()
    weights = (1.0, 5.0)
    separate = []
    for w in weights:
        tr = make_trainer(small_world, reward=reward)
        tr.imbalance = ImbalanceConfig(w)
        tr.fit(small_logs, steps=5)
        separate.append(tr)

    model = make_model(small_world)
    main = make_head(model, name="a/")
    probe = make_head(model, name="b/")
    shared = Trainer(model, main, reward, separate[0].config, ImbalanceConfig(weights[0]), probes=[(probe, ImbalanceConfig(weights[1]))])
    shared.fit(small_logs, steps=5)

    assert_same(param_values(separate[0].model.store, model.shared_names()), param_values(model.store, model.shared_names()))
    for tr, head in zip(separate, (main, probe)):
        ref = {n.split("/", 1)[1]: v for n, v in param_values(tr.model.store, tr.head.param_names()).items()}
        got = {n.split("/", 1)[1]: v for n, v in param_values(model.store, head.param_names()).items()}
        assert_same(ref, got)
