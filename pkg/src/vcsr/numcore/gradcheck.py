"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    checked: int = 0
    worst: str = ""
    per_tensor: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _numeric(f: Callable[[], Tensor], t: Tensor, flat_idx: int, step: float) -> float:
    view = t.data.reshape(-1)
    orig = view[flat_idx]
    view[flat_idx] = orig + step
    fp = f().item()
    view[flat_idx] = orig - step
    fm = f().item()
    view[flat_idx] = orig
    return (fp - fm) / (2.0 * step)


def grad_check_tensors(f: Callable[[], Tensor], tensors: Sequence[tuple[str, Tensor]],
                       step: float = 1e-5, tol: float = 1e-5, max_coords: int | None = None,
                       rng: np.random.Generator | None = None,
                       analytic: dict[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` w.r.t. named leaf tensors to central differences.

    ``f`` is a closure reading the tensors' current values. With ``max_coords``
    set, at most that many coordinates per tensor are probed, chosen by ``rng``.
    ``analytic`` overrides the backward-pass gradients (used to plant faults).
    """
    for _, t in tensors:
        t.zero_grad()
    loss = f()
    loss.backward()
    grads = analytic if analytic is not None else {n: t.grad.copy() for n, t in tensors}

    worst, worst_name, count, per = 0.0, "", 0, {}
    for name, t in tensors:
        g = np.asarray(grads[name]).reshape(-1)
        coords = np.arange(t.size)
        if max_coords is not None and t.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(t.size, max_coords, replace=False)
        t_worst = 0.0
        for i in coords:
            err = rel_err(float(g[i]), _numeric(f, t, int(i), step))
            t_worst = max(t_worst, err)
            count += 1
        per[name] = t_worst
        if t_worst >= worst:
            worst, worst_name = t_worst, name
    return GradCheckReport(worst, worst <= tol, count, worst_name, per)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5,
               tol: float = 1e-5) -> GradCheckReport:
    """Check ``f(x)`` (scalar-valued) against central differences in every coordinate of ``x``."""
    if not x.requires_grad:
        x = Tensor(x.data.copy(), requires_grad=True)
    return grad_check_tensors(lambda: f(x), [("x", x)], step=step, tol=tol)
