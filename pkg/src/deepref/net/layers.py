"""Dense and LSTM layers with hand-derived gradients.

Forward passes return an opaque cache; the matching backward pass consumes it
and accumulates parameter gradients on the layer (so one optimizer step can
follow several backward calls, as in backprop through time). All math is
float64; inputs are batched row-wise, (batch, dim).

Backward derivations, kept next to the code they justify:

Dense, y = act(W x + b) with act ReLU or identity:
    dz = dy * act'(z);  dW = dz^T x;  db = sum_batch dz;  dx = dz W

LSTM step, with s = [h_prev, x] (concatenation) and elementwise *:
    i = sigmoid(Wi s + bi),  f = sigmoid(Wf s + bf),  o = sigmoid(Wo s + bo)
    g = tanh(Wc s + bc)
    c = f * c_prev + i * g
    h = o * tanh(c)
Given dh (from the output and from the next time step) and dc_next:
    do   = dh * tanh(c)
    dc   = dc_next + dh * o * (1 - tanh(c)^2)
    df   = dc * c_prev,   di = dc * g,   dg = dc * i,   dc_prev = dc * f
    dzi  = di * i (1 - i)      [sigmoid']
    dzf  = df * f (1 - f)
    dzo  = do * o (1 - o)
    dzg  = dg * (1 - g^2)      [tanh']
    dW_g = dz_g^T s,  db_g = sum_batch dz_g  for each gate g
    ds   = sum_g dz_g W_g  ->  dh_prev = ds[:, :H],  dx = ds[:, H:]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when an input does not match a layer's declared dimensions."""


def _as_batch(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what}: expected (*, {dim}), got {x.shape}")
    return x


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign so the exponential never overflows.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class DenseCache:
    x: np.ndarray
    z: np.ndarray


class DenseLayer:
    """y = activation(W x + b); activation is 'relu' or 'linear'."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        activation: str,
        rng: np.random.Generator,
    ):
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = init_uniform(rng, (out_dim, in_dim), in_dim)
        self.b = init_uniform(rng, (out_dim,), in_dim)
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, DenseCache]:
        x = _as_batch(x, self.in_dim, "dense input")
        z = x @ self.W.T + self.b
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        return y, DenseCache(x, z)

    def backward(self, dy: np.ndarray, cache: DenseCache) -> np.ndarray:
        dy = _as_batch(dy, self.out_dim, "dense upstream gradient")
        dz = dy * (cache.z > 0.0) if self.activation == "relu" else dy
        self.grad_W += dz.T @ cache.x
        self.grad_b += dz.sum(axis=0)
        return dz @ self.W

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("W", self.W), ("b", self.b)]

    def gradients(self) -> list[np.ndarray]:
        return [self.grad_W, self.grad_b]

    def zero_grad(self) -> None:
        self.grad_W[:] = 0.0
        self.grad_b[:] = 0.0


@dataclass
class LSTMCache:
    s: np.ndarray  # [h_prev, x] concatenated, (batch, H + D)
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray  # candidate cell value, tanh
    c: np.ndarray
    tanh_c: np.ndarray


class LSTMCell:
    """Single LSTM cell; gate weights act on [h_prev, x] of width H + D."""

    GATES = ("i", "f", "o", "c")

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        fan_in = hidden_dim + input_dim
        self.weights: dict[str, np.ndarray] = {}
        self.biases: dict[str, np.ndarray] = {}
        for gate in self.GATES:
            self.weights[gate] = init_uniform(rng, (hidden_dim, fan_in), fan_in)
            self.biases[gate] = init_uniform(rng, (hidden_dim,), fan_in)
        self.grad_weights = {g: np.zeros_like(self.weights[g]) for g in self.GATES}
        self.grad_biases = {g: np.zeros_like(self.biases[g]) for g in self.GATES}

    def initial_state(self, batch: int = 1) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.zeros((batch, self.hidden_dim)),
            np.zeros((batch, self.hidden_dim)),
        )

    def step(
        self, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, LSTMCache]:
        x = _as_batch(x, self.input_dim, "lstm input")
        h_prev = _as_batch(h_prev, self.hidden_dim, "lstm h_prev")
        c_prev = _as_batch(c_prev, self.hidden_dim, "lstm c_prev")
        s = np.concatenate([h_prev, x], axis=1)
        i = sigmoid(s @ self.weights["i"].T + self.biases["i"])
        f = sigmoid(s @ self.weights["f"].T + self.biases["f"])
        o = sigmoid(s @ self.weights["o"].T + self.biases["o"])
        g = np.tanh(s @ self.weights["c"].T + self.biases["c"])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        return h, c, LSTMCache(s, c_prev, i, f, o, g, c, tanh_c)

    def backward_step(
        self, dh: np.ndarray, dc_next: np.ndarray, cache: LSTMCache
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (dx, dh_prev, dc_prev); parameter gradients accumulate."""
        dh = _as_batch(dh, self.hidden_dim, "lstm upstream dh")
        dc_next = _as_batch(dc_next, self.hidden_dim, "lstm upstream dc")
        do = dh * cache.tanh_c
        dc = dc_next + dh * cache.o * (1.0 - cache.tanh_c**2)
        df = dc * cache.c_prev
        di = dc * cache.g
        dg = dc * cache.i
        dc_prev = dc * cache.f
        dz = {
            "i": di * cache.i * (1.0 - cache.i),
            "f": df * cache.f * (1.0 - cache.f),
            "o": do * cache.o * (1.0 - cache.o),
            "c": dg * (1.0 - cache.g**2),
        }
        ds = np.zeros_like(cache.s)
        for gate in self.GATES:
            self.grad_weights[gate] += dz[gate].T @ cache.s
            self.grad_biases[gate] += dz[gate].sum(axis=0)
            ds += dz[gate] @ self.weights[gate]
        dh_prev = ds[:, : self.hidden_dim]
        dx = ds[:, self.hidden_dim :]
        return dx, dh_prev, dc_prev

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out: list[tuple[str, np.ndarray]] = []
        for gate in self.GATES:
            out.append((f"w_{gate}", self.weights[gate]))
        for gate in self.GATES:
            out.append((f"b_{gate}", self.biases[gate]))
        return out

    def gradients(self) -> list[np.ndarray]:
        return [self.grad_weights[g] for g in self.GATES] + [
            self.grad_biases[g] for g in self.GATES
        ]

    def zero_grad(self) -> None:
        for gate in self.GATES:
            self.grad_weights[gate][:] = 0.0
            self.grad_biases[gate][:] = 0.0
