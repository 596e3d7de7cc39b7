"""Trace-driven simulator and RL agents for video prefetching at CDN edge nodes.

The package splits into: trace preparation (`trace_prep`, `synthetic`), the
cache environment (`env`), policies (`baselines`, `agents` on top of `net`),
metrics (`metrics`), and the experiment harness (`config`, `commands`,
`report`, `cli`).
"""

__version__ = "0.1.0"

from .agents import AgentConfig, DQNAgent, DRQNAgent, make_agent  # noqa: E402
from .env import PrefetchEnv, space_cardinalities  # noqa: E402
from .metrics import EpisodeCounters, MetricsReport, aggregate  # noqa: E402
from .rollout import evaluate_policy, run_episode  # noqa: E402
from .trace_prep import Catalog, ContentItem, Request  # noqa: E402

__all__ = [
    "__version__",
    "AgentConfig",
    "DQNAgent",
    "DRQNAgent",
    "make_agent",
    "PrefetchEnv",
    "space_cardinalities",
    "EpisodeCounters",
    "MetricsReport",
    "aggregate",
    "evaluate_policy",
    "run_episode",
    "Catalog",
    "ContentItem",
    "Request",
]
