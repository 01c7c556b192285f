"""RMSProp parameter updates."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .autodiff import Param

__all__ = ["rmsprop_step"]


def rmsprop_step(
    params: Iterable[Param],
    learning_rate: float,
    decay: float = 0.99,
    epsilon: float = 1e-8,
) -> None:
    """Apply one RMSProp update to every param, then clear gradients.

    Per entry: s <- decay*s + (1-decay)*g^2 and v <- v - lr*g/(sqrt(s)+eps).
    Raises on non-finite gradients rather than corrupting the parameters.
    """
    for p in params:
        g = p.grad
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient in rmsprop_step")
        p.rms_state *= decay
        p.rms_state += (1.0 - decay) * g * g
        p.value -= learning_rate * g / (np.sqrt(p.rms_state) + epsilon)
        p.zero_grad()
