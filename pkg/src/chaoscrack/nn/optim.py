"""Adam with bias correction.

The step consumes gradients: after applying an update every .grad is reset
to None, so calling adam_step again without a fresh backward raises
instead of silently reusing stale gradients.
"""

from __future__ import annotations

import numpy as np


def adam_step(params, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError(
                f"parameter {p.name!r} has no gradient; run backward before "
                "adam_step")
    for p in params:
        g = p.grad
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        p.steps += 1
        t = p.steps
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def clear_grads(params):
    for p in params:
        p.grad = None
