"""Optimizers and the Q-regression loss."""

from __future__ import annotations

import numpy as np


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or infinity; training must not continue silently."""


def _check_finite(grads: list[np.ndarray]) -> None:
    for g in grads:
        if not np.isfinite(g).all():
            raise NonFiniteGradientError("non-finite gradient encountered")


class Adam:
    """Standard Adam with bias correction; updates parameters in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        _check_finite(grads)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class SGD:
    """Plain gradient descent, same in-place interface as Adam."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-2):
        self.params = params
        self.lr = lr
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        _check_finite(grads)
        self.t += 1
        for p, g in zip(self.params, grads):
            p -= self.lr * g


def q_loss(q_row: np.ndarray, action: int, target: float) -> tuple[float, np.ndarray]:
    """Squared error on the selected action's Q-value.

    Returns (loss, gradient w.r.t. the whole Q row); the gradient is zero at
    every non-selected action.
    """
    q_row = np.asarray(q_row, dtype=np.float64)
    if q_row.ndim != 1:
        raise ValueError("q_loss expects a single Q row")
    if not (0 <= action < q_row.shape[0]):
        raise ValueError(f"action {action} outside Q row of length {q_row.shape[0]}")
    diff = q_row[action] - target
    grad = np.zeros_like(q_row)
    grad[action] = 2.0 * diff
    return float(diff * diff), grad
