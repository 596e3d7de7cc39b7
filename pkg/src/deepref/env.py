"""Simulated edge cache environment for prefetching.

One step = one user request. The environment checks residency (hit/miss),
pays the reward for the chosen prefetch action, applies the prefetch (with
eviction when full), and advances. Misses never insert the requested item:
the cache is fed by prefetches alone, so a policy that never prefetches runs
an empty cache forever.

Reward for a step, with l = normalized fetch latency of the prefetched item:

    hit  and no-prefetch   ->  2
    hit  and prefetch i    ->  2 - l_i
    miss and no-prefetch   -> -1
    miss and prefetch i    -> -1 - l_i

so every reward lies in [-2, 2].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .metrics import EpisodeCounters
from .trace_prep import Catalog, Request


class EnvError(ValueError):
    """Raised on misuse of the environment (bad action, step after done, ...)."""


@dataclass
class CacheEntry:
    """One resident item and its bookkeeping.

    `timer_start_step` is the timeliness timer origin: the episode start at
    insertion, refreshed to the current step on every hit. `used` flips once
    per residency, the first time the entry serves a hit.
    """

    item_id: int
    last_access_step: int
    timer_start_step: int = 0
    used: bool = False


@dataclass
class CacheState:
    capacity: int
    entries: dict[int, CacheEntry] = field(default_factory=dict)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def item_ids(self) -> list[int]:
        return sorted(self.entries)


@dataclass(frozen=True)
class Observation:
    """What a policy sees before acting: the request (or its history) plus cache bits."""

    request_onehot: np.ndarray
    cache_indicator: np.ndarray
    history: np.ndarray | None = None  # flattened oldest->newest, feed-forward mode only

    def vector(self) -> np.ndarray:
        """Flat float64 vector: history+cache (feed-forward) or request+cache (recurrent)."""
        if self.history is not None:
            return np.concatenate([self.history, self.cache_indicator])
        return np.concatenate([self.request_onehot, self.cache_indicator])


@dataclass(frozen=True)
class StepOutcome:
    hit: bool
    reward: float
    sent_prefetch: bool
    evicted_item: int | None
    done: bool


@dataclass(frozen=True)
class StepRecord:
    """One line of an episode log."""

    step: int
    item_requested: int
    hit: bool
    action: int
    reward: float
    sent: bool
    evicted: int | None


def lru_choose_victim(cache: CacheState) -> int:
    """Least-recently-used resident; ties (equal recency) go to the smaller item id."""
    if not cache.full:
        raise EnvError("victim requested from a cache that is not full")
    return min(cache.entries.values(), key=lambda e: (e.last_access_step, e.item_id)).item_id


def belady_choose_victim(cache: CacheState, future: Sequence[int]) -> int:
    """Resident whose next occurrence in `future` is furthest away.

    Residents that never occur again are infinitely far and win; ties go to
    the smaller item id.
    """
    if not cache.full:
        raise EnvError("victim requested from a cache that is not full")
    next_pos = {item_id: math.inf for item_id in cache.entries}
    unseen = set(next_pos)
    for i, item in enumerate(future):
        if item in unseen:
            next_pos[item] = i
            unseen.discard(item)
            if not unseen:
                break
    return max(cache.entries, key=lambda item_id: (next_pos[item_id], -item_id))


def encode_observation(
    mode: Literal["dqn", "drqn"],
    recent_requests: Sequence[int],
    cache_items: Sequence[int],
    num_items: int,
    history_len: int = 4,
) -> Observation:
    """Build the observation for either agent encoding.

    Feed-forward ("dqn") mode flattens the last `history_len` requests as
    one-hots, oldest first, zero-padded at the front, then appends the cache
    indicator. Recurrent ("drqn") mode encodes only the newest request plus
    the cache indicator.
    """
    if not recent_requests:
        raise EnvError("observation needs at least the current request")
    current = recent_requests[-1]
    request_onehot = np.zeros(num_items)
    request_onehot[current] = 1.0
    cache_indicator = np.zeros(num_items)
    for item_id in cache_items:
        cache_indicator[item_id] = 1.0
    if mode == "drqn":
        return Observation(request_onehot, cache_indicator)
    if mode != "dqn":
        raise EnvError(f"unknown observation mode {mode!r}")
    history = np.zeros((history_len, num_items))
    tail = list(recent_requests)[-history_len:]
    for slot, item_id in zip(range(history_len - len(tail), history_len), tail):
        history[slot, item_id] = 1.0
    return Observation(request_onehot, cache_indicator, history=history.ravel())


def space_cardinalities(num_items: int, capacity: int) -> tuple[int, int, int]:
    """Exact (#cache configurations, #actions, product) for M items, capacity C_e."""
    if capacity < 1 or num_items < capacity:
        raise EnvError(f"need num_items >= capacity >= 1, got {num_items}, {capacity}")
    n_states = math.comb(num_items, capacity)
    n_actions = num_items + 1
    return n_states, n_actions, n_states * n_actions


class PrefetchEnv:
    """Trace-driven cache simulator; strictly sequential, one request per step.

    `eviction` picks the victim chooser ("lru" or "belady"). With
    `demand_fetch_hits` on (the clairvoyant baseline's serving model), a step
    whose action prefetches exactly the currently requested, non-resident
    item counts as a hit: the fetch serves the request synchronously.
    """

    def __init__(
        self,
        trace: Sequence[Request] | Sequence[int],
        catalog: Catalog,
        capacity: int,
        mode: Literal["dqn", "drqn"] = "dqn",
        history_len: int = 4,
        eviction: Literal["lru", "belady"] = "lru",
        demand_fetch_hits: bool = False,
    ):
        if capacity < 1:
            raise EnvError("capacity must be >= 1")
        if not trace:
            raise EnvError("trace window is empty")
        if history_len < 1:
            raise EnvError("history_len must be >= 1")
        if eviction not in ("lru", "belady"):
            raise EnvError(f"unknown eviction policy {eviction!r}")
        self.requests: list[Request] = [
            r if isinstance(r, Request) else Request(i, 0, int(r), 0)
            for i, r in enumerate(trace)
        ]
        for r in self.requests:
            if not (0 <= r.item_id < catalog.num_items):
                raise EnvError(f"trace item {r.item_id} outside catalog")
        self.catalog = catalog
        self.capacity = capacity
        self.mode = mode
        self.history_len = history_len
        self.eviction = eviction
        self.demand_fetch_hits = demand_fetch_hits
        self.num_items = catalog.num_items
        self.no_prefetch_action = catalog.num_items
        self.reset()

    # -- episode lifecycle ------------------------------------------------

    def reset(self) -> Observation:
        """Empty the cache, zero all counters, load the first request."""
        self.cache = CacheState(self.capacity)
        self.counters = EpisodeCounters()
        self._t = 0
        self._done = False
        return self._observe()

    @property
    def episode_len(self) -> int:
        return len(self.requests)

    @property
    def current_step(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    @property
    def current_request(self) -> Request:
        if self._done:
            raise EnvError("no current request: episode is over")
        return self.requests[self._t]

    def resident(self, item_id: int) -> bool:
        return item_id in self.cache.entries

    def future_items(self) -> list[int]:
        """Item ids of the requests after the current one (oracle's view)."""
        return [r.item_id for r in self.requests[self._t + 1 :]]

    def _observe(self) -> Observation:
        if self._done:
            # Terminal marker only; never used for action selection.
            zeros = np.zeros(self.num_items)
            history = None
            if self.mode == "dqn":
                history = np.zeros(self.history_len * self.num_items)
            return Observation(zeros, zeros.copy(), history=history)
        recent = [r.item_id for r in self.requests[max(0, self._t - self.history_len + 1) : self._t + 1]]
        return encode_observation(
            self.mode, recent, self.cache.item_ids(), self.num_items, self.history_len
        )

    # -- the step ----------------------------------------------------------

    def step(self, action: int) -> tuple[StepOutcome, Observation]:
        if self._done:
            raise EnvError("step() after episode end")
        if not (0 <= action <= self.no_prefetch_action):
            raise EnvError(f"action {action} outside [0, {self.no_prefetch_action}]")
        step = self._t
        item = self.requests[step].item_id
        prefetching = action != self.no_prefetch_action
        resident = item in self.cache.entries

        # 1. Hit/miss is decided before the prefetch lands (the oracle's
        #    synchronous demand fetch being the one exception).
        hit = resident or (self.demand_fetch_hits and prefetching and action == item)

        # 2. Reward.
        if prefetching:
            lat = self.catalog.latency(action)
            reward = (2.0 - lat) if hit else (-1.0 - lat)
        else:
            reward = 2.0 if hit else -1.0
        if hit:
            self.counters.hits += 1
        else:
            self.counters.misses += 1

        # 3. A resident hit refreshes recency and the timeliness timer and
        #    marks the residency used (counted once).
        if resident:
            entry = self.cache.entries[item]
            entry.last_access_step = step
            entry.timer_start_step = step
            if not entry.used:
                entry.used = True
                self.counters.used_prefetches += 1

        # 4. Apply the prefetch. A redundant prefetch of a cached item counts
        #    as sent (and paid for in the reward) but changes nothing.
        evicted: int | None = None
        if prefetching:
            self.counters.sent_prefetches += 1
            if action not in self.cache.entries:
                if self.cache.full:
                    if self.eviction == "belady":
                        victim_id = belady_choose_victim(self.cache, self.future_items())
                    else:
                        victim_id = lru_choose_victim(self.cache)
                    victim = self.cache.entries.pop(victim_id)
                    self.counters.timeliness_samples.append(step - victim.timer_start_step)
                    evicted = victim_id
                entry = CacheEntry(action, last_access_step=step, timer_start_step=0)
                if hit and not resident:
                    # Synchronous demand fetch: this residency is already used.
                    entry.used = True
                    entry.timer_start_step = step
                    self.counters.used_prefetches += 1
                self.cache.entries[action] = entry

        # 5. No demand caching: a miss never inserts the requested item.

        # 6. Advance; at episode end every survivor contributes a timeliness
        #    sample measured from its timer origin to the horizon.
        self._t += 1
        done = self._t >= len(self.requests)
        if done:
            self._done = True
            horizon = len(self.requests)
            for item_id in sorted(self.cache.entries):
                self.counters.timeliness_samples.append(
                    horizon - self.cache.entries[item_id].timer_start_step
                )
        outcome = StepOutcome(hit, reward, prefetching, evicted, done)
        return outcome, self._observe()


def episode_windows(requests: Sequence[Request], episode_len: int) -> list[list[Request]]:
    """Chop a trace into consecutive non-overlapping episodes, dropping the tail."""
    if episode_len < 1:
        raise EnvError("episode_len must be >= 1")
    n = len(requests) // episode_len
    return [list(requests[i * episode_len : (i + 1) * episode_len]) for i in range(n)]


def write_episode_log_csv(path: str | Path, records: Sequence[StepRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "item_requested", "hit", "action", "reward", "sent", "evicted"])
        for r in records:
            w.writerow([
                r.step,
                r.item_requested,
                int(r.hit),
                r.action,
                repr(r.reward),
                int(r.sent),
                "" if r.evicted is None else r.evicted,
            ])
