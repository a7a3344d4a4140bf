import numpy as np
import pytest

from conftest import make_model, randomize
from shapedrec.errors import ConfigurationError, DataError
from shapedrec.nn import ParamStore, Tensor, no_grad
from shapedrec.policy import (
    InteractionEvent,
    ModelConfig,
    PolicyModel,
    load_checkpoint,
    policy_probs,
    sample_actions,
    save_checkpoint,
)


def history(items, comps=None):
    comps = comps if comps is not None else [0.5] * len(items)
    return [InteractionEvent(i, c) for i, c in zip(items, comps)]


@pytest.fixture
def model(small_world):
    return make_model(small_world, seed=1)


def test_empty_history_is_finite_and_deterministic(model):
    a = model.encode_state([], 0)
    assert a.shape == (model.config.state_dim,) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, model.encode_state([], 0))


def test_history_order_matters(model):
    h = history([1, 2, 3, 4], [0.9, 0.1, 0.5, 0.3])
    assert not np.allclose(model.encode_state(h, 0), model.encode_state(h[::-1], 0))


def test_unknown_ids_rejected(model):
    with pytest.raises(DataError):
        model.encode_state(history([model.n_items]), 0)
    with pytest.raises(DataError):
        model.encode_state([], model.config.n_contexts)
    with pytest.raises(DataError):
        InteractionEvent(0, 1.5)


def test_truncation_drops_oldest(small_world):
    m = make_model(small_world, max_history=5)
    h = history(list(range(9)), np.linspace(0, 1, 9))
    np.testing.assert_array_equal(m.encode_state(h, 1), m.encode_state(h[-5:], 1))


@pytest.mark.parametrize("max_history", [50, 2])
def test_prefix_states_match_encode_state(small_world, small_logs, max_history):
    m = make_model(small_world, max_history=max_history)
    logs = small_logs.subset([0, 1])
    with no_grad():
        states = m.prefix_states(logs.item, logs.completion, logs.context).data
    H = logs.horizon
    for b in range(2):
        for t in range(H):
            hist = history(logs.item[b, :t], logs.completion[b, :t])
            np.testing.assert_allclose(states[b * H + t], m.encode_state(hist, int(logs.context[b, t])), atol=1e-12)


@pytest.mark.parametrize("max_history", [50, 2])
def test_session_matches_prefix_states(small_world, small_logs, max_history):
    m = make_model(small_world, max_history=max_history)
    logs = small_logs.subset([3, 4, 5])
    with no_grad():
        probs = m.policy_probs(m.prefix_states(logs.item, logs.completion, logs.context).data)
    session = m.session(3)
    H = logs.horizon
    for t in range(H):
        p = session.probs(t, logs.context[:, t])
        np.testing.assert_allclose(p, probs[np.arange(3) * H + t], atol=1e-12)
        session.observe(logs.item[:, t], logs.completion[:, t])


def test_probs_are_distributions(model, small_logs):
    with no_grad():
        s = model.prefix_states(small_logs.item, small_logs.completion, small_logs.context).data
    p = model.policy_probs(s)
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_identical_action_embeddings_give_uniform():
    p = policy_probs(np.array([0.3, -1.2]), np.tile([0.5, 2.0], (7, 1)), 1.0)
    np.testing.assert_allclose(p, 1 / 7, atol=1e-15)


def test_sharp_temperature_concentrates_on_aligned_action():
    table = np.eye(4)
    p = policy_probs(table[2], table, 0.01)
    assert p[2] > 0.999


def test_scale_temperature_equivalence():
    rng = np.random.default_rng(0)
    u, table = rng.normal(size=3), rng.normal(size=(10, 3))
    np.testing.assert_allclose(policy_probs(2 * u, table, 2.0), policy_probs(u, table, 1.0), atol=1e-15)


def test_state_dim_mismatch():
    with pytest.raises(ConfigurationError):
        policy_probs(np.zeros(3), np.zeros((5, 4)), 1.0)


def test_log_probs_gradcheck(small_world, small_logs):
    from shapedrec.nn import grad_check
    from shapedrec.nn.tensor import pick

    m = make_model(small_world, seed=5)
    randomize(m.store, np.random.default_rng(0))
    batch = small_logs.subset([0, 1])

    def closure():
        lp = m.log_probs(m.prefix_states(batch.item, batch.completion, batch.context))
        return pick(lp, batch.item.ravel()).sum()

    report = grad_check(closure, m.store, max_entries=8, rng=np.random.default_rng(0))
    assert report.max_rel_error < 1e-4, report.per_param


# -- sampling ----------------------------------------------------------------------
def test_sample_all_items():
    items, _ = sample_actions(np.full(6, 1 / 6), 6, np.random.default_rng(0))
    assert sorted(items) == list(range(6))


def test_point_mass():
    p = np.zeros(5)
    p[3] = 1.0
    items, logp = sample_actions(p, 1, np.random.default_rng(1))
    assert items[0] == 3 and logp[0] == 0.0


def test_too_many_items():
    with pytest.raises(ConfigurationError):
        sample_actions(np.full(3, 1 / 3), 4, np.random.default_rng(0))


def test_single_draw_frequencies():
    p = np.array([0.5, 0.2, 0.15, 0.1, 0.05])
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.bincount([sample_actions(p, 1, rng)[0][0] for _ in range(n)], minlength=5)
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


def test_sampling_without_replacement_distinct():
    rng = np.random.default_rng(3)
    p = np.random.default_rng(4).dirichlet(np.ones(20))
    for _ in range(50):
        items, logp = sample_actions(p, 5, rng)
        assert len(set(items.tolist())) == 5
        np.testing.assert_allclose(np.exp(logp), p[items])


# -- persistence -------------------------------------------------------------------
def test_checkpoint_round_trip(tmp_path, model):
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, model.store, {"model": model.config.to_dict()})
    man, values = load_checkpoint(path)
    assert man["model"]["max_history"] == model.config.max_history
    for k, v in model.store.values().items():
        np.testing.assert_array_equal(values[k], v)
        assert values[k].dtype == np.float64


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, __manifest__=np.array('{"format": "other"}'))
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_snapshot_is_independent(model):
    snap = model.snapshot()
    model.store["bottom/action"].data += 1.0
    assert not np.array_equal(snap.store["bottom/action"].data, model.store["bottom/action"].data)


def test_model_config_validation():
    with pytest.raises(ConfigurationError):
        ModelConfig(n_items=0, n_contexts=1)
    with pytest.raises(ConfigurationError):
        ModelConfig(n_items=3, n_contexts=1, temperature=0.0)
    with pytest.raises(ConfigurationError):
        PolicyModel(ModelConfig(n_items=3, n_contexts=1), np.zeros(2, dtype=int), ParamStore())
