import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapedrec.errors import ConfigurationError, TrainingError
from shapedrec.nn import (
    MLP,
    Dense,
    Embedding,
    GRUCell,
    ParamStore,
    Tensor,
    adam_step,
    bce_with_logits,
    concat,
    dense,
    grad_check,
    gru_cell,
    log_softmax,
    pick,
    softmax_temperature,
    stop_gradient,
    take_rows,
)
from shapedrec.nn import tensor as T


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


class TestDense:
    def test_identity(self):
        out = dense(Tensor([[1.0, 0.0]]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, [[1.0, 0.0]])

    def test_hand_computed(self):
        out = dense(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]), Tensor([0.5]))
        np.testing.assert_allclose(out.data, [[3.5]])

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            dense(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)
        dense(x, w, b).sum().backward()

        def f():
            return float((x.data @ w.data + b.data).sum())

        for t in (x, w, b):
            num = fd_grad(f, t.data)
            rel = np.abs(t.grad - num) / np.maximum(np.abs(num), 1e-8)
            assert rel.max() < 1e-6


class TestGRU:
    def test_zero_everything_gives_zero(self):
        store = ParamStore()
        cell = GRUCell(store, "g", 3, 4, np.random.default_rng(0), zero=True)
        h = cell(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 3))))
        np.testing.assert_array_equal(h.data, np.zeros((1, 4)))

    def test_output_bounded(self):
        rng = np.random.default_rng(1)
        store = ParamStore()
        cell = GRUCell(store, "g", 3, 5, rng)
        for p in store.names():
            store[p].data = rng.normal(scale=1.0, size=store[p].shape)
        h = Tensor(np.zeros((8, 5)))
        for _ in range(10):
            h = cell(h, Tensor(rng.normal(scale=2, size=(8, 3))))
            assert np.all(np.abs(h.data) < 1)

    def test_fixed_point_under_repeated_input(self):
        rng = np.random.default_rng(2)
        store = ParamStore()
        cell = GRUCell(store, "g", 3, 4, rng)
        store["g/w_h"].data *= 0.3  # contractive recurrence
        x = Tensor(rng.normal(size=(1, 3)))
        h = Tensor(np.zeros((1, 4)))
        for _ in range(500):
            nxt = cell(h, x)
            delta = np.linalg.norm(nxt.data - h.data)
            h = nxt
        assert delta < 1e-6

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        store = ParamStore()
        cell = GRUCell(store, "g", 3, 4, rng)
        h0 = store.add("h0", rng.uniform(-0.5, 0.5, size=(2, 4)))
        xs = [rng.normal(size=(2, 3)) for _ in range(3)]

        def closure():
            h = h0
            for x in xs:
                h = cell(h, Tensor(x))
            return (h * h).sum()

        rep = grad_check(closure, store, tolerance=1e-5)
        assert rep.max_rel_error < 1e-5, rep.per_param

    def test_shape_mismatch(self):
        store = ParamStore()
        cell = GRUCell(store, "g", 3, 4, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            cell(Tensor(np.zeros((1, 5))), Tensor(np.zeros((1, 3))))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax_temperature([1.0, 1.0, 1.0], 1.0), [1 / 3] * 3)

    def test_two_logits(self):
        e2 = np.exp(2.0)
        p = softmax_temperature([2.0, 0.0], 1.0)
        np.testing.assert_allclose(p, [e2 / (e2 + 1), 1 / (e2 + 1)], rtol=1e-12)
        np.testing.assert_allclose(p, [0.8808, 0.1192], atol=1e-4)

    def test_sharpening(self):
        assert softmax_temperature([2.0, 0.0], 0.1).max() > 1 - 1e-8

    @pytest.mark.parametrize("temp", [0.0, -1.0])
    def test_bad_temperature(self, temp):
        with pytest.raises(ConfigurationError):
            softmax_temperature([1.0, 2.0], temp)
        with pytest.raises(ConfigurationError):
            log_softmax(Tensor([[1.0, 2.0]]), temp)

    def test_extreme_logits_finite(self):
        p = softmax_temperature([1e4, -1e4, 0.0], 1.0)
        assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(
        arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50)),
        st.floats(0.05, 20.0),
        st.floats(-100, 100),
    )
    def test_properties(self, logits, temp, shift):
        p = softmax_temperature(logits, temp)
        assert abs(p.sum() - 1.0) < 1e-9
        assert np.all(p >= 0)
        np.testing.assert_allclose(softmax_temperature(logits + shift, temp), p, atol=1e-9)
        if np.sum(logits == logits.max()) == 1:
            assert np.argmax(p) == np.argmax(softmax_temperature(logits, 1.0))

    def test_log_softmax_gradient(self):
        rng = np.random.default_rng(4)
        store = ParamStore()
        store.add("z", rng.normal(size=(3, 5)))
        cols = np.array([0, 3, 4])
        rep = grad_check(lambda: pick(log_softmax(store["z"], 0.7), cols).sum(), store)
        assert rep.max_rel_error < 1e-6


class TestOps:
    def test_take_rows_accumulates_duplicates(self):
        table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        take_rows(table, [0, 0, 2]).sum().backward()
        np.testing.assert_array_equal(table.grad, [[2, 2], [0, 0], [1, 1]])

    def test_take_rows_out_of_range(self):
        with pytest.raises(IndexError):
            take_rows(Tensor(np.zeros((3, 2))), [3])

    def test_bce_matches_direct_formula(self):
        x = Tensor(np.array([-3.0, 0.0, 2.0, 40.0]), requires_grad=True)
        y = np.array([0, 1, 1, 0])
        loss = bce_with_logits(x, y).data
        s = 1 / (1 + np.exp(-x.data[:3]))
        direct = -(y[:3] * np.log(s) + (1 - y[:3]) * np.log(1 - s))
        np.testing.assert_allclose(loss[:3], direct, rtol=1e-12)
        assert np.isclose(loss[3], 40.0)

    def test_stop_gradient_blocks_ancestors(self):
        store = ParamStore()
        a = store.add("a", np.array([1.0, 2.0]))
        b = store.add("b", np.array([3.0, -1.0]))
        out = (stop_gradient(a * a) * b).sum() + (a * 0.5).sum()
        store.zero_grad()
        out.backward()
        np.testing.assert_array_equal(store["b"].grad, [1.0, 4.0])
        np.testing.assert_array_equal(store["a"].grad, [0.5, 0.5])

    def test_stop_gradient_only_path_leaves_grad_none(self):
        store = ParamStore()
        a = store.add("a", np.ones(3))
        w = store.add("w", np.ones(3))
        (stop_gradient(T.tanh(a)) * w).sum().backward()
        assert store["a"].grad is None
        rep = grad_check(lambda: (stop_gradient(T.tanh(store["a"])) * store["w"]).sum(), store)
        np.testing.assert_array_equal(rep.analytic["a"], 0.0)

    def test_concat_and_getitem_gradients(self):
        rng = np.random.default_rng(5)
        store = ParamStore()
        store.add("a", rng.normal(size=(2, 3)))
        store.add("b", rng.normal(size=(2, 2)))

        def closure():
            c = concat([store["a"], store["b"]], axis=1)
            return (T.sigmoid(c[:, 1:4]) * c[:, :3]).sum()

        assert grad_check(closure, store).max_rel_error < 1e-7


class TestGradCheck:
    def test_linear_model_exact(self):
        rng = np.random.default_rng(6)
        store = ParamStore()
        layer = Dense(store, "d", 4, 3, rng)
        x = Tensor(rng.normal(size=(5, 4)))
        c = rng.normal(size=(5, 3))
        # finite differences are exact for a linear map up to roundoff, which h=1e-3 keeps small
        rep = grad_check(lambda: (layer(x) * c).sum(), store, h=1e-3)
        assert rep.max_rel_error < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_mlp_embedding_at_random_points(self, seed):
        rng = np.random.default_rng(seed)
        store = ParamStore()
        emb = Embedding(store, "e", 6, 3, rng)
        mlp = MLP(store, "m", 3, [5, 2], rng, final_linear=True)
        idx = rng.integers(0, 6, size=7)
        y = rng.integers(0, 2, size=7)
        for n in store.names():
            store[n].data = rng.normal(size=store[n].shape)

        def closure():
            logit = mlp(emb(idx))[:, 0]
            return bce_with_logits(logit, y, weights=np.where(y == 0, 3.0, 1.0)).mean()

        assert grad_check(closure, store).max_rel_error < 1e-4


class TestAdam:
    def test_zero_grad_leaves_params(self):
        store = ParamStore()
        store.add("w", np.array([1.0, -2.0]))
        store["w"].grad = np.zeros(2)
        adam_step(store)
        np.testing.assert_array_equal(store["w"].data, [1.0, -2.0])

    def test_first_step_magnitude_is_learning_rate(self):
        store = ParamStore()
        store.add("w", np.array([0.0]))
        lr = 1e-3
        store["w"].grad = np.array([1.0])
        adam_step(store, learning_rate=lr)
        # m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
        np.testing.assert_allclose(store["w"].data, [-lr / (1 + 1e-8)], rtol=1e-12)
        for _ in range(5):
            before = store["w"].data.copy()
            store["w"].grad = np.array([1.0])
            adam_step(store, learning_rate=lr)
            np.testing.assert_allclose(before - store["w"].data, lr, rtol=1e-6)

    def test_grads_cleared_and_missing_grads_skipped(self):
        store = ParamStore()
        store.add("a", np.ones(2))
        store.add("b", np.ones(2))
        store["a"].grad = np.ones(2)
        updated = adam_step(store)
        assert updated == ["a"]
        assert store["a"].grad is None
        np.testing.assert_array_equal(store["b"].data, np.ones(2))

    def test_non_finite_gradient_names_parameter(self):
        store = ParamStore()
        store.add("layer/w", np.ones(2))
        store["layer/w"].grad = np.array([np.nan, 0.0])
        with pytest.raises(TrainingError, match="layer/w"):
            adam_step(store)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(11)
            store = ParamStore()
            mlp = MLP(store, "m", 3, [4, 1], rng, final_linear=True)
            x = Tensor(rng.normal(size=(16, 3)))
            y = rng.integers(0, 2, size=16)
            for _ in range(20):
                bce_with_logits(mlp(x)[:, 0], y).mean().backward()
                adam_step(store, learning_rate=1e-2)
            return store.flat()

        assert run().tobytes() == run().tobytes()

    def test_duplicate_names_rejected(self):
        store = ParamStore()
        store.add("a", np.ones(1))
        with pytest.raises(ConfigurationError):
            store.add("a", np.ones(1))
