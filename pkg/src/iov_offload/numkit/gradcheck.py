"""Finite-difference verification of the backward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import Node, Param, Tape

__all__ = ["GradReport", "grad_check"]

# Relative-error denominator floor: keeps the metric meaningful for entries
# whose true gradient is ~0 (central differences carry ~1e-11 rounding noise).
_DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class GradReport:
    max_rel_error: float
    per_param: dict[str, float]

    def __str__(self) -> str:
        worst = max(self.per_param, key=self.per_param.get) if self.per_param else "-"
        return f"GradReport(max_rel_error={self.max_rel_error:.3e}, worst={worst})"


def grad_check(
    forward: Callable[[], Node],
    params: Mapping[str, Param],
    step: float = 1e-5,
) -> GradReport:
    """Compare tape gradients against central differences, entry by entry.

    ``forward`` must be deterministic, use only recorded ops, and return a
    1x1 node.  Returns the max relative error over every entry of every
    param; the analytic side is recomputed from a fresh tape, the numeric
    side perturbs each entry by +-step with no tape active.
    """
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = forward()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    for p in params.values():
        p.zero_grad()

    def eval_loss() -> float:
        return float(forward().value[0, 0])

    per_param: dict[str, float] = {}
    for name, p in params.items():
        a = analytic[name]
        err = 0.0
        flat = p.value.reshape(-1)
        aflat = a.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            f_plus = eval_loss()
            flat[k] = orig - step
            f_minus = eval_loss()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(aflat[k]), abs(numeric), _DENOM_FLOOR)
            err = max(err, abs(aflat[k] - numeric) / denom)
        per_param[name] = err
    worst = max(per_param.values()) if per_param else 0.0
    return GradReport(max_rel_error=worst, per_param=per_param)
