"""Central finite-difference gradient checking.

The analytic backward passes in this package are hand-derived; this module is
the independent numeric route that keeps them honest. Never replace a failing
check by loosening it — fix the derivation.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def max_relative_error(
    loss_fn: Callable[[], float],
    params: list[np.ndarray],
    analytic_grads: list[np.ndarray],
    epsilon: float = 1e-5,
) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    Every coordinate of every parameter is perturbed by ±epsilon and the loss
    re-evaluated (so keep the shapes small). The per-coordinate error is
    |analytic − numeric| / max(|analytic|, |numeric|, 1e−10), with exact-ish
    agreement (absolute difference below 1e−10) scored as zero so true zero
    gradients do not divide by noise.
    """
    if len(params) != len(analytic_grads):
        raise ValueError("parameter and gradient lists differ in length")
    worst = 0.0
    for p, g in zip(params, analytic_grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        flat_p = p.ravel()
        flat_g = g.ravel()
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + epsilon
            loss_plus = loss_fn()
            flat_p[idx] = orig - epsilon
            loss_minus = loss_fn()
            flat_p[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            diff = abs(flat_g[idx] - numeric)
            if diff < 1e-10:
                continue
            scale = max(abs(flat_g[idx]), abs(numeric), 1e-10)
            worst = max(worst, diff / scale)
    return worst
