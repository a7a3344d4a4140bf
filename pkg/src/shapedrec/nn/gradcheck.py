"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    analytic: dict[str, np.ndarray] = field(default_factory=dict)
    numeric: dict[str, np.ndarray] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(
    closure: Callable[[], Tensor],
    params: ParamStore,
    tolerance: float = 1e-4,
    names: list[str] | None = None,
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-7,
) -> GradCheckReport:
    """Compare backprop gradients of ``closure()`` with central differences.

    ``closure`` must rebuild the graph from the current parameter values on
    every call. When ``max_entries`` is set, at most that many coordinates of
    each parameter (chosen with ``rng``) are perturbed.
    """
    names = list(params) if names is None else names
    rng = rng or np.random.default_rng(0)
    params.zero_grad()
    closure().backward()
    analytic = {n: (params[n].grad.copy() if params[n].grad is not None else np.zeros_like(params[n].data)) for n in names}
    params.zero_grad()

    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance)
    for name in names:
        p = params[name]
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        num = np.zeros(idx.size)
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + h
            fp = closure().item()
            flat[k] = orig - h
            fm = closure().item()
            flat[k] = orig
            num[j] = (fp - fm) / (2.0 * h)
        ana = analytic[name].reshape(-1)[idx]
        err = float(relative_error(ana, num, floor).max()) if idx.size else 0.0
        report.per_param[name] = err
        report.analytic[name] = ana
        report.numeric[name] = num
        report.max_rel_error = max(report.max_rel_error, err)
    return report
