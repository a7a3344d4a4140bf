"""Dense, GRU, embedding and ReLU-stack building blocks on top of ``ParamStore``."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from . import tensor as T
from .params import ParamStore, uniform
from .tensor import Tensor

EMBED_INIT = 0.05


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ W + b``."""
    if x.shape[-1] != weight.shape[0]:
        raise ConfigurationError(f"dense: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    if bias.shape[-1] != weight.shape[1]:
        raise ConfigurationError(f"dense: bias width {bias.shape[-1]} != weight cols {weight.shape[1]}")
    return x @ weight + bias


class Dense:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False):
        scale = np.sqrt(6.0 / (n_in + n_out))
        w = np.zeros((n_in, n_out)) if zero else uniform(rng, (n_in, n_out), scale)
        self.weight = store.add(f"{name}/w", w)
        self.bias = store.add(f"{name}/b", np.zeros(n_out))
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)


class MLP:
    """Stack of ReLU layers; ``final_linear`` leaves the last layer without activation."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        n_in: int,
        sizes: Sequence[int],
        rng: np.random.Generator,
        final_linear: bool = False,
        zero: bool = False,
    ):
        self.layers = []
        width = n_in
        for i, size in enumerate(sizes):
            self.layers.append(Dense(store, f"{name}/{i}", width, size, rng, zero=zero))
            width = size
        self.final_linear = final_linear
        self.n_out = width

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if not (self.final_linear and i == last):
                x = T.relu(x)
        return x


class Embedding:
    def __init__(self, store: ParamStore, name: str, n: int, dim: int, rng: np.random.Generator, zero: bool = False):
        init = np.zeros((n, dim)) if zero else uniform(rng, (n, dim), EMBED_INIT)
        self.table = store.add(name, init)
        self.n, self.dim = n, dim

    def __call__(self, idx) -> Tensor:
        return T.take_rows(self.table, idx)


def gru_cell(h: Tensor, x: Tensor, w_x: Tensor, w_h: Tensor, b_x: Tensor, b_h: Tensor) -> Tensor:
    """One GRU update with gates packed as [reset | update | candidate].

    r = s(x Wr + h Ur + br), z = s(x Wz + h Uz + bz),
    n = tanh(x Wn + bxn + r * (h Un + bhn)), h' = (1 - z) * n + z * h.
    """
    hidden = h.shape[-1]
    if w_h.shape != (hidden, 3 * hidden):
        raise ConfigurationError(f"gru: hidden width {hidden} incompatible with recurrent weights {w_h.shape}")
    if x.shape[-1] != w_x.shape[0]:
        raise ConfigurationError(f"gru: input width {x.shape[-1]} != {w_x.shape[0]}")
    gx = x @ w_x + b_x
    gh = h @ w_h + b_h
    r = T.sigmoid(gx[:, :hidden] + gh[:, :hidden])
    z = T.sigmoid(gx[:, hidden : 2 * hidden] + gh[:, hidden : 2 * hidden])
    n = T.tanh(gx[:, 2 * hidden :] + r * gh[:, 2 * hidden :])
    return (1.0 - z) * n + z * h


def gru_sequence(x: Tensor, h0: Tensor, w_x: Tensor, w_h: Tensor, b_x: Tensor, b_h: Tensor) -> Tensor:
    """Run :func:`gru_cell` over ``x[:, t]`` for every ``t`` as a single graph node.

    ``x`` is ``[B, L, n_in]``; the result is ``[B, L + 1, hidden]`` with
    ``h0`` in slot 0. The backward pass is hand-written backprop through time.
    """
    B, L, n_in = x.shape
    hidden = h0.shape[-1]
    if w_h.shape != (hidden, 3 * hidden) or w_x.shape != (n_in, 3 * hidden):
        raise ConfigurationError(f"gru: weights {w_x.shape}, {w_h.shape} incompatible with input {n_in}, hidden {hidden}")
    H = hidden
    xs = x.data.reshape(B * L, n_in)
    gx_all = (xs @ w_x.data + b_x.data).reshape(B, L, 3 * H)
    hs = np.empty((B, L + 1, H))
    hs[:, 0] = h0.data
    cache = []
    for t in range(L):
        h = hs[:, t]
        gx, gh = gx_all[:, t], h @ w_h.data + b_h.data
        r = T._sigmoid(gx[:, :H] + gh[:, :H])
        z = T._sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
        ghn = gh[:, 2 * H :]
        n = np.tanh(gx[:, 2 * H :] + r * ghn)
        hs[:, t + 1] = (1.0 - z) * n + z * h
        cache.append((r, z, n, ghn))

    def bw(g):
        dgx = np.empty((B, L, 3 * H))
        dw_h = np.zeros_like(w_h.data)
        db_h = np.zeros(3 * H)
        dh = g[:, L].copy()
        for t in range(L - 1, -1, -1):
            r, z, n, ghn = cache[t]
            h = hs[:, t]
            da_n = dh * (1.0 - z) * (1.0 - n * n)
            da_z = dh * (h - n) * z * (1.0 - z)
            da_r = da_n * ghn * r * (1.0 - r)
            dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
            dgx[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
            dw_h += h.T @ dgh
            db_h += dgh.sum(axis=0)
            dh = dgh @ w_h.data.T + dh * z + g[:, t]
        flat = dgx.reshape(B * L, 3 * H)
        h0._accumulate(dh, owned=True)
        x._accumulate((flat @ w_x.data.T).reshape(B, L, n_in), owned=True)
        w_x._accumulate(xs.T @ flat, owned=True)
        b_x._accumulate(flat.sum(axis=0), owned=True)
        w_h._accumulate(dw_h, owned=True)
        b_h._accumulate(db_h, owned=True)

    return T._node(hs, (x, h0, w_x, w_h, b_x, b_h), bw, "gru_sequence")


class GRUCell:
    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, rng: np.random.Generator, zero: bool = False):
        scale = 1.0 / np.sqrt(hidden)
        mk = (lambda shape: np.zeros(shape)) if zero else (lambda shape: uniform(rng, shape, scale))
        self.w_x = store.add(f"{name}/w_x", mk((n_in, 3 * hidden)))
        self.w_h = store.add(f"{name}/w_h", mk((hidden, 3 * hidden)))
        self.b_x = store.add(f"{name}/b_x", np.zeros(3 * hidden))
        self.b_h = store.add(f"{name}/b_h", np.zeros(3 * hidden))
        self.n_in, self.hidden = n_in, hidden

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        return gru_cell(h, x, self.w_x, self.w_h, self.b_x, self.b_h)

    def sequence(self, x: Tensor, h0: Tensor) -> Tensor:
        return gru_sequence(x, h0, self.w_x, self.w_h, self.b_x, self.b_h)
