"""Prefetching quality metrics: accuracy, coverage, aggressiveness, timeliness.

All four are computed from integer event counters plus a list of residency
durations, so multi-episode aggregation is exact: counters add up and ratios
are taken once over the sums (never averaged per-episode), and timeliness
samples are pooled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class EpisodeCounters:
    """Raw integer event counts plus timeliness samples for one episode."""

    hits: int = 0
    misses: int = 0
    sent_prefetches: int = 0
    used_prefetches: int = 0
    timeliness_samples: list[int] = field(default_factory=list)

    @property
    def requests(self) -> int:
        return self.hits + self.misses

    def merge(self, other: "EpisodeCounters") -> None:
        self.hits += other.hits
        self.misses += other.misses
        self.sent_prefetches += other.sent_prefetches
        self.used_prefetches += other.used_prefetches
        self.timeliness_samples.extend(other.timeliness_samples)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    coverage: float
    aggressiveness: float
    timeliness_mean: float
    timeliness_std: float
    episodes: int
    # The integer inputs the ratios were computed from, kept so downstream
    # consumers can re-derive or re-aggregate without float round-tripping.
    hits: int = 0
    misses: int = 0
    sent_prefetches: int = 0
    used_prefetches: int = 0
    timeliness_count: int = 0


def accuracy(counters: EpisodeCounters) -> float:
    """Fraction of requests served from cache. Requires at least one request."""
    if counters.requests == 0:
        raise ValueError("accuracy undefined with zero requests")
    return counters.hits / counters.requests


def coverage(counters: EpisodeCounters) -> float:
    """Fraction of sent prefetches that were eventually hit; 0.0 if none were sent."""
    if counters.sent_prefetches == 0:
        return 0.0
    return counters.used_prefetches / counters.sent_prefetches


def aggressiveness(counters: EpisodeCounters) -> float:
    """Prefetches sent per request; can exceed 1 only if a policy sends multiples."""
    if counters.requests == 0:
        raise ValueError("aggressiveness undefined with zero requests")
    return counters.sent_prefetches / counters.requests


def timeliness_stats(samples: list[int]) -> tuple[float, float]:
    """Mean and population standard deviation of residency durations.

    Zero samples (a policy that never inserted anything) is reported as
    (0.0, 0.0) rather than an error so runs always produce a full row.
    """
    if not samples:
        return 0.0, 0.0
    n = len(samples)
    mean = sum(samples) / n
    var = sum((s - mean) ** 2 for s in samples) / n
    return mean, math.sqrt(var)


def aggregate(episodes: list[EpisodeCounters]) -> MetricsReport:
    """Pool episode counters and compute the four metrics over the sums."""
    if not episodes:
        raise ValueError("no episodes to aggregate")
    total = EpisodeCounters()
    for ep in episodes:
        total.merge(ep)
    t_mean, t_std = timeliness_stats(total.timeliness_samples)
    return MetricsReport(
        accuracy=accuracy(total),
        coverage=coverage(total),
        aggressiveness=aggressiveness(total),
        timeliness_mean=t_mean,
        timeliness_std=t_std,
        episodes=len(episodes),
        hits=total.hits,
        misses=total.misses,
        sent_prefetches=total.sent_prefetches,
        used_prefetches=total.used_prefetches,
        timeliness_count=len(total.timeliness_samples),
    )
