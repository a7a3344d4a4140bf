"""Named parameter storage with gradient and optimizer-moment slots."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor


class ParamStore:
    """Ordered collection of trainable tensors.

    Each entry carries its gradient (``Tensor.grad``) plus Adam first and
    second moments and a per-parameter step count. Parameters whose gradient
    is ``None`` at update time are treated as untouched and left alone.
    """

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        p = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        self.t[name] = 0
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def values(self) -> dict[str, np.ndarray]:
        """Copies of the current parameter arrays."""
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            p = self._params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ConfigurationError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def flat(self, names: list[str] | None = None) -> np.ndarray:
        names = list(self._params) if names is None else names
        return np.concatenate([self._params[n].data.ravel() for n in names])


def uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)
