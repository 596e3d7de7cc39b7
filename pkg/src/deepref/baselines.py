"""Baseline prefetching policies.

Six non-learning policies behind the common policy interface: a clairvoyant
oracle (Belady-style eviction plus synchronous demand fetches), two top-k
one-shot prefetchers (by popularity and by size), two running-popularity
prefetchers (24-hour sliding window and all-time), and a uniform-random
calibration floor. All tie-breaks go to the smaller item id so runs are
reproducible bit for bit.
"""

from __future__ import annotations

from collections import Counter, deque

import numpy as np

from .env import Observation
from .rollout import BasePolicy, PolicyContext
from .trace_prep import Catalog, Request, WINDOW_24H_S


class BeladyPrefetchPolicy(BasePolicy):
    """Clairvoyant oracle: on a miss, fetch the requested item right now.

    The fetch serves the request synchronously (the environment counts it as
    a hit) and evictions look into the future, so accuracy and coverage are
    both 1.0 on any trace.
    """

    name = "belady"
    env_overrides = {"eviction": "belady", "demand_fetch_hits": True}

    def act(self, obs: Observation, ctx: PolicyContext) -> int:
        if ctx.request.item_id in ctx.cache_items:
            return ctx.no_prefetch_action
        return ctx.request.item_id


class TopKPolicy(BasePolicy):
    """Prefetch the first k = capacity items of a fixed ranking, one per step.

    The cursor advances every step of the warm-up phase even when the ranked
    item is already cached (that step sends nothing); after the first k steps
    the policy never prefetches again until the next episode.
    """

    name = "topk"

    def __init__(self, ranked: list[int], name: str | None = None):
        self.ranked = list(ranked)
        if name:
            self.name = name
        self._cursor = 0

    def begin_episode(self) -> None:
        self._cursor = 0

    def act(self, obs: Observation, ctx: PolicyContext) -> int:
        k = min(ctx.capacity, len(self.ranked))
        if self._cursor >= k:
            return ctx.no_prefetch_action
        candidate = self.ranked[self._cursor]
        self._cursor += 1
        if candidate in ctx.cache_items:
            return ctx.no_prefetch_action
        return candidate


def rank_by_popularity(requests: list[Request], num_items: int) -> list[int]:
    """All item ids, most-requested first; ties and unseen items by smaller id."""
    counts = Counter(r.item_id for r in requests)
    return sorted(range(num_items), key=lambda i: (-counts.get(i, 0), i))


def rank_by_size(catalog: Catalog) -> list[int]:
    """All item ids, largest first; size ties by smaller id."""
    return sorted(range(catalog.num_items), key=lambda i: (-catalog.size(i), i))


class PopularityPolicy(BasePolicy):
    """Prefetch the currently most popular item whenever it is not cached.

    Counts accumulate over the whole run (episodes do not reset popularity).
    With `window_seconds` set, only requests within that much trace time of
    the current request count; otherwise popularity is all-time. The current
    request is counted only after the decision, so the very first step of a
    run sees an empty table and does not prefetch.
    """

    def __init__(self, window_seconds: int | None = None):
        self.window_seconds = window_seconds
        self.name = "pop-all" if window_seconds is None else "pop-recent"
        self._counts: Counter[int] = Counter()
        self._window: deque[tuple[int, int]] = deque()  # (timestamp, item_id)

    def act(self, obs: Observation, ctx: PolicyContext) -> int:
        now = ctx.request.timestamp
        if self.window_seconds is not None:
            cutoff = now - self.window_seconds
            while self._window and self._window[0][0] < cutoff:
                _, old_item = self._window.popleft()
                self._counts[old_item] -= 1
                if self._counts[old_item] == 0:
                    del self._counts[old_item]
        action = ctx.no_prefetch_action
        if self._counts:
            winner = min(self._counts, key=lambda i: (-self._counts[i], i))
            if winner not in ctx.cache_items:
                action = winner
        self._counts[ctx.request.item_id] += 1
        if self.window_seconds is not None:
            self._window.append((now, ctx.request.item_id))
        return action


class RandomPolicy(BasePolicy):
    """Uniform over all actions including do-not-prefetch; the calibration floor."""

    name = "random"

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)

    def act(self, obs: Observation, ctx: PolicyContext) -> int:
        return int(self._rng.integers(0, ctx.no_prefetch_action + 1))


def make_popularity_recent_policy() -> PopularityPolicy:
    return PopularityPolicy(window_seconds=WINDOW_24H_S)


def make_popularity_all_policy() -> PopularityPolicy:
    return PopularityPolicy(window_seconds=None)
