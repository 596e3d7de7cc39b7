"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import pytest

from deepref.trace_prep import Catalog, ContentItem, Request


def make_catalog(latencies: list[float], sizes: list[float] | None = None) -> Catalog:
    """Catalog with explicit normalized latencies (and optional sizes)."""
    if sizes is None:
        sizes = [100.0 * (i + 1) for i in range(len(latencies))]
    return Catalog(
        tuple(
            ContentItem(i, float(sizes[i]), float(latencies[i]))
            for i in range(len(latencies))
        )
    )


def uniform_catalog(num_items: int, latency: float = 1.0) -> Catalog:
    """Catalog where every item has the same latency (reward math is easy)."""
    return make_catalog([latency] * num_items)


def requests_from_items(
    items: list[int], t0: int = 1000, dt: int = 1, edge: int = 0
) -> list[Request]:
    """Wrap item ids as Requests with evenly spaced timestamps."""
    return [Request(t0 + k * dt, 1, item, edge) for k, item in enumerate(items)]


@pytest.fixture
def cat4() -> Catalog:
    """Four items with distinct latencies 0.25, 0.5, 0.75, 1.0."""
    return make_catalog([0.25, 0.5, 0.75, 1.0])


@pytest.fixture
def cat2() -> Catalog:
    """Two items, latencies 0.5 and 1.0."""
    return make_catalog([0.5, 1.0])
