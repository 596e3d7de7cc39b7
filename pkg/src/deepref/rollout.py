"""Policy interface and the generic episode runner shared by baselines and agents."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from .env import Observation, PrefetchEnv, StepOutcome, StepRecord
from .metrics import EpisodeCounters
from .trace_prep import Request


@dataclass(frozen=True)
class PolicyContext:
    """Per-step facts handed to a policy alongside the encoded observation."""

    step_index: int
    request: Request
    cache_items: frozenset[int]
    num_items: int
    capacity: int
    no_prefetch_action: int
    future: tuple[int, ...] = ()  # items after the current request; oracles only


class Policy(Protocol):
    """A prefetching decision-maker driven one request at a time."""

    name: str

    def begin_episode(self) -> None: ...

    def act(self, obs: Observation, ctx: PolicyContext) -> int: ...


class BasePolicy:
    """Default plumbing: stateless across episodes, no oracle access."""

    name = "base"
    needs_future = False
    # Environment settings this policy requires (e.g. the clairvoyant baseline
    # needs Belady eviction and synchronous demand fetches).
    env_overrides: dict[str, object] = {}

    def begin_episode(self) -> None:
        return None


TransitionHook = Callable[[Observation, int, StepOutcome, Observation], None]


@dataclass
class EpisodeResult:
    counters: EpisodeCounters
    total_reward: float
    steps: int
    records: list[StepRecord] = field(default_factory=list)

    @property
    def avg_reward(self) -> float:
        return self.total_reward / self.steps if self.steps else 0.0


def run_episode(
    env: PrefetchEnv,
    policy: Policy,
    collect_log: bool = False,
    on_transition: TransitionHook | None = None,
) -> EpisodeResult:
    """Reset the environment and drive it to the end of its trace window.

    `on_transition` sees every (obs, action, outcome, next_obs) as it happens;
    training loops hang replay-buffer pushes and update steps off it.
    """
    obs = env.reset()
    policy.begin_episode()
    needs_future = getattr(policy, "needs_future", False)
    total_reward = 0.0
    steps = 0
    records: list[StepRecord] = []
    while not env.done:
        ctx = PolicyContext(
            step_index=env.current_step,
            request=env.current_request,
            cache_items=frozenset(env.cache.entries),
            num_items=env.num_items,
            capacity=env.capacity,
            no_prefetch_action=env.no_prefetch_action,
            future=tuple(env.future_items()) if needs_future else (),
        )
        action = policy.act(obs, ctx)
        outcome, next_obs = env.step(action)
        if collect_log:
            records.append(
                StepRecord(
                    step=ctx.step_index,
                    item_requested=ctx.request.item_id,
                    hit=outcome.hit,
                    action=action,
                    reward=outcome.reward,
                    sent=outcome.sent_prefetch,
                    evicted=outcome.evicted_item,
                )
            )
        if on_transition is not None:
            on_transition(obs, action, outcome, next_obs)
        total_reward += outcome.reward
        steps += 1
        obs = next_obs
    return EpisodeResult(env.counters, total_reward, steps, records)


def evaluate_policy(
    policy: Policy,
    windows,
    catalog,
    capacity: int,
    mode: str = "dqn",
    history_len: int = 4,
    collect_logs: bool = False,
):
    """Greedy evaluation of a policy over a list of episode windows.

    Returns (aggregated MetricsReport, per-episode EpisodeResult list); the
    aggregation pools raw counters across episodes before taking any ratio.
    """
    from .metrics import aggregate

    if not windows:
        raise ValueError("no episode windows to evaluate on")
    results: list[EpisodeResult] = []
    for window in windows:
        env = make_env_for_policy(
            policy, window, catalog, capacity, mode=mode, history_len=history_len
        )
        results.append(run_episode(env, policy, collect_log=collect_logs))
    report = aggregate([r.counters for r in results])
    return report, results


def make_env_for_policy(
    policy: Policy,
    trace,
    catalog,
    capacity: int,
    mode: str = "dqn",
    history_len: int = 4,
) -> PrefetchEnv:
    """Build an environment honoring the policy's declared overrides."""
    overrides = dict(getattr(policy, "env_overrides", {}))
    return PrefetchEnv(
        trace,
        catalog,
        capacity,
        mode=overrides.get("mode", mode),  # type: ignore[arg-type]
        history_len=history_len,
        eviction=overrides.get("eviction", "lru"),  # type: ignore[arg-type]
        demand_fetch_hits=bool(overrides.get("demand_fetch_hits", False)),
    )
