"""Q-learning prefetching agents: feed-forward (dqn) and recurrent (drqn).

Both agents drive the same environment through the common policy interface.
The feed-forward agent learns from a ring buffer of single transitions; the
recurrent agent stores whole episodes, samples them at random, and replays
each one in order from a zero hidden state, applying truncated backprop
through time in windows of `tbptt_forward`/`tbptt_backward` steps. Both use
a periodically synchronized target network for bootstrap targets.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import Observation, PrefetchEnv
from .metrics import EpisodeCounters
from .net.checkpoint import load_checkpoint, restore_into, save_checkpoint
from .net.networks import QNetwork, RecurrentQNetwork
from .net.optim import Adam, q_loss
from .rollout import BasePolicy, PolicyContext, run_episode
from .trace_prep import Catalog, Request


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool

    def __post_init__(self):
        if not (-2.0 <= self.reward <= 2.0):
            raise ValueError(f"reward {self.reward} outside [-2, 2]")


@dataclass
class AgentConfig:
    """Hyperparameters shared by both agents; every field is a config-file key."""

    gamma: float = 0.99
    lr: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # 0 means "half of the training episodes", resolved by the training loop.
    epsilon_decay_episodes: int = 0
    buffer_capacity: int = 10_000  # transitions (feed-forward agent)
    episode_buffer_capacity: int = 500  # episodes (recurrent agent)
    batch_size: int = 32
    episode_batch_size: int = 4
    target_update_period: int = 1000  # optimizer steps between target syncs
    train_every: int = 4  # decisions between batch updates (feed-forward agent)
    history_len: int = 4  # request history window in the feed-forward encoding
    hidden_size: int = 512
    hidden_layers: int = 2  # depth of the feed-forward ReLU stack
    tbptt_forward: int = 300  # k1: forward steps per training window
    tbptt_backward: int = 300  # k2: max backprop depth per window
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must be in [0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        if self.tbptt_forward < 1 or self.tbptt_backward < 1:
            raise ValueError("TBPTT window sizes must be >= 1")
        for name in (
            "buffer_capacity",
            "episode_buffer_capacity",
            "batch_size",
            "episode_batch_size",
            "target_update_period",
            "train_every",
            "history_len",
            "hidden_size",
            "hidden_layers",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def epsilon_at(self, episode_index: int, total_episodes: int) -> float:
        """Linear decay from start to end over the configured episode count."""
        decay = self.epsilon_decay_episodes or max(1, total_episodes // 2)
        frac = min(1.0, max(0.0, episode_index / decay))
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over a Q row; greedy ties break to the lowest index."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must be in [0, 1]")
    q_values = np.asarray(q_values)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, q_values.shape[-1]))
    return int(np.argmax(q_values))


def td_target(reward: float, next_q_values: np.ndarray, done: bool, gamma: float) -> float:
    """One-step bootstrap target: r + gamma * max_a' Q(s', a'), cut at terminals."""
    if done:
        return float(reward)
    return float(reward + gamma * float(np.max(next_q_values)))


class _Ring:
    """Fixed-capacity buffer with strictly oldest-first eviction and O(1) indexing."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int):
        return self._items[i]


class TransitionBuffer(_Ring):
    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self) < batch_size:
            raise ValueError(f"buffer holds {len(self)} < batch of {batch_size}")
        idx = rng.choice(len(self), size=batch_size, replace=False)
        return [self[int(i)] for i in idx]


class EpisodeBuffer(_Ring):
    def push(self, episode: list[Transition]) -> None:
        if not episode:
            raise ValueError("refusing to store an empty episode")
        super().push(episode)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[list[Transition]]:
        if len(self) == 0:
            raise ValueError("episode buffer is empty")
        idx = rng.integers(0, len(self), size=batch_size)
        return [self[int(i)] for i in idx]


class AgentPolicy(BasePolicy):
    """Adapter presenting an agent as a per-episode policy."""

    def __init__(self, agent: "DQNAgent | DRQNAgent", explore: bool):
        self.agent = agent
        self.explore = explore
        self.name = agent.arch

    def begin_episode(self) -> None:
        self.agent.begin_episode()

    def act(self, obs: Observation, ctx: PolicyContext) -> int:
        return self.agent.act(obs.vector(), self.explore)


class DQNAgent:
    """Feed-forward Q-learning on a request-history observation."""

    arch = "dqn"
    obs_mode = "dqn"

    def __init__(self, num_items: int, config: AgentConfig):
        self.num_items = num_items
        self.config = config
        self.num_actions = num_items + 1
        self.input_dim = config.history_len * num_items + num_items
        net_seed, explore_seed, sample_seed = _derive_seeds(config.seed)
        hidden = [config.hidden_size] * config.hidden_layers
        self.online = QNetwork(self.input_dim, hidden, self.num_actions, net_seed)
        self.target = self.online.clone()
        self.optimizer = Adam([p for _, p in self.online.parameters()], lr=config.lr)
        self.buffer = TransitionBuffer(config.buffer_capacity)
        self._explore_rng = np.random.default_rng(explore_seed)
        self._sample_rng = np.random.default_rng(sample_seed)
        self.epsilon = config.epsilon_start
        self.optimizer_steps = 0
        self._decisions = 0

    def policy(self, explore: bool) -> AgentPolicy:
        return AgentPolicy(self, explore)

    def begin_episode(self) -> None:
        return None

    def act(self, obs_vec: np.ndarray, explore: bool) -> int:
        q = self.online.predict(obs_vec)[0]
        eps = self.epsilon if explore else 0.0
        return select_action(q, eps, self._explore_rng)

    def observe(self, transition: Transition) -> float | None:
        """Store a transition; every `train_every` decisions, run one batch update."""
        self.buffer.push(transition)
        self._decisions += 1
        if (
            len(self.buffer) >= self.config.batch_size
            and self._decisions % self.config.train_every == 0
        ):
            return self.train_batch()
        return None

    def finish_episode(self) -> float | None:
        return None

    def train_batch(self) -> float:
        batch = self.buffer.sample(self.config.batch_size, self._sample_rng)
        obs = np.stack([t.obs for t in batch])
        next_obs = np.stack([t.next_obs for t in batch])
        next_q = self.target.predict(next_obs)
        targets = np.array(
            [
                td_target(t.reward, next_q[k], t.done, self.config.gamma)
                for k, t in enumerate(batch)
            ]
        )
        q, caches = self.online.forward(obs)
        rows = np.arange(len(batch))
        actions = np.array([t.action for t in batch])
        diff = q[rows, actions] - targets
        loss = float(np.mean(diff**2))
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * diff / len(batch)
        self.online.zero_grad()
        self.online.backward(dq, caches)
        self.optimizer.step(self.online.gradients())
        self._after_optimizer_step()
        return loss

    def _after_optimizer_step(self) -> None:
        self.optimizer_steps += 1
        if self.optimizer_steps % self.config.target_update_period == 0:
            self.target.copy_from(self.online)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {"num_items": self.num_items, "config": asdict(self.config)}
        save_checkpoint(path, self.arch, meta, self.online.parameters())

    @classmethod
    def load(cls, path: str | Path) -> "DQNAgent":
        arch, meta, params = load_checkpoint(path)
        agent = cls(meta["num_items"], AgentConfig(**meta["config"]))
        restore_into(agent.online, params, cls.arch, arch)
        agent.target.copy_from(agent.online)
        return agent


class DRQNAgent:
    """Recurrent Q-learning: the LSTM state summarizes the request history."""

    arch = "drqn"
    obs_mode = "drqn"

    def __init__(self, num_items: int, config: AgentConfig):
        self.num_items = num_items
        self.config = config
        self.num_actions = num_items + 1
        self.input_dim = 2 * num_items
        net_seed, explore_seed, sample_seed = _derive_seeds(config.seed)
        self.online = RecurrentQNetwork(
            self.input_dim, config.hidden_size, self.num_actions, net_seed
        )
        self.target = self.online.clone()
        self.optimizer = Adam([p for _, p in self.online.parameters()], lr=config.lr)
        self.buffer = EpisodeBuffer(config.episode_buffer_capacity)
        self._explore_rng = np.random.default_rng(explore_seed)
        self._sample_rng = np.random.default_rng(sample_seed)
        self.epsilon = config.epsilon_start
        self.optimizer_steps = 0
        self._state = self.online.initial_state(1)
        self._pending: list[Transition] = []

    def policy(self, explore: bool) -> AgentPolicy:
        return AgentPolicy(self, explore)

    def begin_episode(self) -> None:
        """Hidden state and the pending-episode accumulator reset per episode."""
        self._state = self.online.initial_state(1)
        self._pending = []

    def act(self, obs_vec: np.ndarray, explore: bool) -> int:
        # The recurrent state advances on every step, including explored ones:
        # it tracks the request sequence, not the action choices.
        q, self._state, _ = self.online.step(obs_vec, self._state)
        eps = self.epsilon if explore else 0.0
        return select_action(q[0], eps, self._explore_rng)

    def observe(self, transition: Transition) -> float | None:
        self._pending.append(transition)
        return None

    def finish_episode(self) -> float | None:
        """Store the completed episode, then train on a random batch of episodes."""
        if not self._pending:
            return None
        self.buffer.push(self._pending)
        self._pending = []
        return self.train_batch()

    def train_batch(self) -> float | None:
        if len(self.buffer) == 0:
            return None
        episodes = self.buffer.sample(self.config.episode_batch_size, self._sample_rng)
        losses = [self._train_on_episode(ep) for ep in episodes]
        return float(np.mean(losses))

    def _train_on_episode(self, episode: list[Transition]) -> float:
        """Replay one episode from a zero state in TBPTT windows.

        Within an episode, each transition's next observation is the following
        transition's observation, so running the target network once over
        [obs_0 .. obs_{T-1}, last next_obs] yields every bootstrap row: the
        Q row for next_obs_t sits at position t+1.
        """
        k1 = self.config.tbptt_forward
        k2 = self.config.tbptt_backward
        obs_seq = [t.obs for t in episode] + [episode[-1].next_obs]
        target_qs, _, _ = self.target.forward_sequence(obs_seq)

        state = self.online.initial_state(1)
        losses: list[float] = []
        for start in range(0, len(episode), k1):
            window = episode[start : start + k1]
            xs = [t.obs for t in window]
            qs, state, caches = self.online.forward_sequence(xs, state)
            # Gradient flow stops at window boundaries (state carries values,
            # not history), which is the truncation in truncated BPTT.
            dqs = np.zeros_like(qs)
            window_losses = []
            for j, t in enumerate(window):
                y = td_target(
                    t.reward, target_qs[start + j + 1, 0], t.done, self.config.gamma
                )
                step_loss, grad_row = q_loss(qs[j, 0], t.action, y)
                window_losses.append(step_loss)
                dqs[j, 0] = grad_row / len(window)
            self.online.zero_grad()
            self.online.backward_sequence(dqs, caches, backprop_window=k2)
            self.optimizer.step(self.online.gradients())
            self._after_optimizer_step()
            losses.append(float(np.mean(window_losses)))
        return float(np.mean(losses))

    def _after_optimizer_step(self) -> None:
        self.optimizer_steps += 1
        if self.optimizer_steps % self.config.target_update_period == 0:
            self.target.copy_from(self.online)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {"num_items": self.num_items, "config": asdict(self.config)}
        save_checkpoint(path, self.arch, meta, self.online.parameters())

    @classmethod
    def load(cls, path: str | Path) -> "DRQNAgent":
        arch, meta, params = load_checkpoint(path)
        agent = cls(meta["num_items"], AgentConfig(**meta["config"]))
        restore_into(agent.online, params, cls.arch, arch)
        agent.target.copy_from(agent.online)
        return agent


def _derive_seeds(seed: int) -> tuple[int, int, int]:
    """Three independent child seeds (net init, exploration, replay sampling)."""
    state = np.random.SeedSequence(seed).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def make_agent(arch: str, num_items: int, config: AgentConfig) -> "DQNAgent | DRQNAgent":
    if arch == "dqn":
        return DQNAgent(num_items, config)
    if arch == "drqn":
        return DRQNAgent(num_items, config)
    raise ValueError(f"unknown agent architecture {arch!r}")


def load_agent(path: str | Path) -> "DQNAgent | DRQNAgent":
    arch, _, _ = load_checkpoint(path)
    if arch == "dqn":
        return DQNAgent.load(path)
    if arch == "drqn":
        return DRQNAgent.load(path)
    raise ValueError(f"checkpoint declares unknown architecture {arch!r}")


@dataclass(frozen=True)
class CurveRow:
    """One line of the training-progress CSV."""

    episode: int
    avg_reward: float
    epsilon: float
    loss: float | None


def run_agent_episode(
    env: PrefetchEnv, agent, explore: bool
) -> tuple[list[Transition], EpisodeCounters, float]:
    """One rollout collecting the transition sequence (training or evaluation)."""
    transitions: list[Transition] = []

    def hook(obs, action, outcome, next_obs):
        transitions.append(
            Transition(
                obs.vector(), action, outcome.reward, next_obs.vector(), outcome.done
            )
        )

    result = run_episode(env, agent.policy(explore), on_transition=hook)
    return transitions, result.counters, result.avg_reward


def train_agent(
    agent,
    windows: Sequence[list[Request]],
    catalog: Catalog,
    capacity: int,
    episodes: int,
    progress_every: int = 0,
) -> list[CurveRow]:
    """Train over episode windows, cycling through them in order.

    Per episode: set epsilon from the schedule, roll out with exploration
    (the agent trains from its replay buffer as transitions arrive or at the
    episode's end, depending on the agent), and record the curve row.
    """
    if not windows:
        raise ValueError("no episode windows to train on")
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rows: list[CurveRow] = []
    for ep in range(episodes):
        agent.epsilon = agent.config.epsilon_at(ep, episodes)
        env = PrefetchEnv(
            windows[ep % len(windows)],
            catalog,
            capacity,
            mode=agent.obs_mode,
            history_len=agent.config.history_len,
        )
        losses: list[float] = []

        def hook(obs, action, outcome, next_obs):
            loss = agent.observe(
                Transition(
                    obs.vector(), action, outcome.reward, next_obs.vector(), outcome.done
                )
            )
            if loss is not None:
                losses.append(loss)

        result = run_episode(env, agent.policy(explore=True), on_transition=hook)
        final_loss = agent.finish_episode()
        if final_loss is not None:
            losses.append(final_loss)
        rows.append(
            CurveRow(
                episode=ep,
                avg_reward=result.avg_reward,
                epsilon=agent.epsilon,
                loss=float(np.mean(losses)) if losses else None,
            )
        )
        if progress_every and (ep + 1) % progress_every == 0:
            print(
                f"episode {ep + 1}/{episodes}: avg_reward={result.avg_reward:+.4f} "
                f"epsilon={agent.epsilon:.3f}"
            )
    return rows


def write_curve_csv(path: str | Path, rows: Sequence[CurveRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "avg_reward", "epsilon", "loss"])
        for r in rows:
            w.writerow(
                [
                    r.episode,
                    repr(r.avg_reward),
                    repr(r.epsilon),
                    "" if r.loss is None else repr(r.loss),
                ]
            )
