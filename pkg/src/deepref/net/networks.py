"""Q-value networks assembled from the hand-rolled layers.

Two shapes: a feed-forward network (ReLU hidden layers, linear head) for the
history-window agent, and a recurrent one (dense ReLU body feeding an LSTM,
linear head) for the memory agent. Both accumulate gradients layer-side and
expose a flat, deterministically ordered parameter list so the optimizer,
target-network sync, and checkpoints all walk the same structure.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import DenseCache, DenseLayer, LSTMCache, LSTMCell


class QNetwork:
    """Feed-forward Q-network: input -> hidden ReLU stack -> linear Q row."""

    arch = "dqn"

    def __init__(
        self,
        input_dim: int,
        hidden_dims: Sequence[int],
        num_actions: int,
        seed: int,
    ):
        if not hidden_dims:
            raise ValueError("need at least one hidden layer")
        self.input_dim = input_dim
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.num_actions = num_actions
        self.seed = seed
        rng = np.random.default_rng(seed)
        dims = [input_dim, *self.hidden_dims]
        self.layers: list[DenseLayer] = [
            DenseLayer(dims[k], dims[k + 1], "relu", rng) for k in range(len(dims) - 1)
        ]
        self.layers.append(DenseLayer(dims[-1], num_actions, "linear", rng))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[DenseCache]]:
        caches: list[DenseCache] = []
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out, caches

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, dq: np.ndarray, caches: list[DenseCache]) -> np.ndarray:
        grad = dq
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad = layer.backward(grad, cache)
        return grad

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, layer in enumerate(self.layers):
            out.extend((f"layer{k}.{n}", p) for n, p in layer.parameters())
        return out

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.gradients()]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def copy_from(self, other: "QNetwork") -> None:
        for (_, mine), (_, theirs) in zip(self.parameters(), other.parameters()):
            mine[:] = theirs

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.input_dim, self.hidden_dims, self.num_actions, self.seed)
        twin.copy_from(self)
        return twin


StepCache = tuple[DenseCache, LSTMCache, DenseCache]


class RecurrentQNetwork:
    """Recurrent Q-network: dense ReLU body -> LSTM -> linear Q row per step."""

    arch = "drqn"

    def __init__(self, input_dim: int, hidden_dim: int, num_actions: int, seed: int):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_actions = num_actions
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.body = DenseLayer(input_dim, hidden_dim, "relu", rng)
        self.cell = LSTMCell(hidden_dim, hidden_dim, rng)
        self.head = DenseLayer(hidden_dim, num_actions, "linear", rng)

    def initial_state(self, batch: int = 1) -> tuple[np.ndarray, np.ndarray]:
        return self.cell.initial_state(batch)

    def step(
        self, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]
    ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray], StepCache]:
        h_prev, c_prev = state
        u, body_cache = self.body.forward(x)
        h, c, lstm_cache = self.cell.step(u, h_prev, c_prev)
        q, head_cache = self.head.forward(h)
        return q, (h, c), (body_cache, lstm_cache, head_cache)

    def forward_sequence(
        self,
        xs: Sequence[np.ndarray],
        state: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray], list[StepCache]]:
        """Run the cell over a sequence of per-step inputs (each (dim,) or (B, dim)).

        Returns stacked Q rows of shape (T, B, num_actions), the final state,
        and the per-step caches needed for backward_sequence.
        """
        if len(xs) == 0:
            raise ValueError("empty sequence")
        first = np.asarray(xs[0], dtype=np.float64)
        batch = 1 if first.ndim == 1 else first.shape[0]
        if state is None:
            state = self.initial_state(batch)
        qs = []
        caches: list[StepCache] = []
        for x in xs:
            q, state, cache = self.step(x, state)
            qs.append(q)
            caches.append(cache)
        return np.stack(qs), state, caches

    def backward_sequence(
        self,
        dqs: np.ndarray,
        caches: list[StepCache],
        backprop_window: int | None = None,
    ) -> None:
        """Backprop through time over cached steps, newest first.

        `backprop_window` truncates: only the last that-many steps receive
        their loss gradient and participate in the recurrence (None = all,
        i.e. full BPTT over this cached window). Parameter gradients
        accumulate on the layers.
        """
        T = len(caches)
        if dqs.shape[0] != T:
            raise ValueError(f"got {dqs.shape[0]} gradient rows for {T} cached steps")
        start = 0 if backprop_window is None else max(0, T - backprop_window)
        batch = caches[-1][1].c.shape[0]
        dh_next = np.zeros((batch, self.hidden_dim))
        dc_next = np.zeros((batch, self.hidden_dim))
        for t in range(T - 1, start - 1, -1):
            body_cache, lstm_cache, head_cache = caches[t]
            dh = self.head.backward(dqs[t], head_cache) + dh_next
            du, dh_next, dc_next = self.cell.backward_step(dh, dc_next, lstm_cache)
            self.body.backward(du, body_cache)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = [(f"body.{n}", p) for n, p in self.body.parameters()]
        out += [(f"lstm.{n}", p) for n, p in self.cell.parameters()]
        out += [(f"head.{n}", p) for n, p in self.head.parameters()]
        return out

    def gradients(self) -> list[np.ndarray]:
        return self.body.gradients() + self.cell.gradients() + self.head.gradients()

    def zero_grad(self) -> None:
        self.body.zero_grad()
        self.cell.zero_grad()
        self.head.zero_grad()

    def copy_from(self, other: "RecurrentQNetwork") -> None:
        for (_, mine), (_, theirs) in zip(self.parameters(), other.parameters()):
            mine[:] = theirs

    def clone(self) -> "RecurrentQNetwork":
        twin = RecurrentQNetwork(
            self.input_dim, self.hidden_dim, self.num_actions, self.seed
        )
        twin.copy_from(self)
        return twin
