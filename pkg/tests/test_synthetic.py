"""Synthetic corpus generator: determinism, shape, and parser compatibility."""

from __future__ import annotations

import filecmp

import pytest

from deepref.synthetic import PROFILES, generate_corpus, generate_profile
from deepref.trace_prep import (
    geocode_users,
    load_zip_table,
    parse_ratings,
    parse_user_zips,
)


def test_same_seed_writes_byte_identical_corpora(tmp_path):
    a = generate_profile(tmp_path / "a", "mini", seed=3)
    b = generate_profile(tmp_path / "b", "mini", seed=3)
    for pa, pb in [(a.ratings, b.ratings), (a.users, b.users), (a.zips, b.zips)]:
        assert filecmp.cmp(pa, pb, shallow=False)


def test_different_seed_changes_the_event_stream(tmp_path):
    a = generate_profile(tmp_path / "a", "mini", seed=3)
    b = generate_profile(tmp_path / "b", "mini", seed=4)
    assert a.ratings.read_text() != b.ratings.read_text()


def test_unknown_profile_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown profile"):
        generate_profile(tmp_path, "jumbo")
    with pytest.raises(ValueError, match="regions"):
        generate_corpus(tmp_path, num_regions=99)
    with pytest.raises(ValueError, match="per region"):
        generate_corpus(tmp_path, num_users=2, num_regions=3)


def test_generated_corpus_satisfies_the_ingest_parsers(tmp_path):
    spec = PROFILES["mini"]
    paths = generate_profile(tmp_path, "mini", seed=7)

    ratings = parse_ratings(paths.ratings)
    assert len(ratings) == spec["num_events"]
    assert {r.user_id for r in ratings} <= set(range(1, spec["num_users"] + 1))
    assert {r.item_id for r in ratings} <= set(range(1, spec["num_items"] + 1))
    assert all(1 <= r.rating <= 5 for r in ratings)

    user_zips = parse_user_zips(paths.users)
    assert len(user_zips) == spec["num_users"]
    zip_table = load_zip_table(paths.zips)
    geos, dropped = geocode_users(user_zips, zip_table)

    # Users assigned the deliberately-unresolvable zip are exactly the drops.
    unresolvable = sum(1 for z in user_zips.values() if z == "00000")
    assert dropped == unresolvable
    assert len(geos) == spec["num_users"] - dropped
    assert len(geos) > 0
    assert all(-90 <= g.lat <= 90 and -180 <= g.lon <= 180 for g in geos)


def test_timestamps_are_sorted_per_user_not_globally(tmp_path):
    paths = generate_profile(tmp_path, "mini", seed=1)
    ratings = parse_ratings(paths.ratings)
    by_user: dict[int, list[int]] = {}
    for r in ratings:
        by_user.setdefault(r.user_id, []).append(r.timestamp)
    # parse order is file order, which is shuffled; per-user streams are
    # chronological once re-sorted by the pipeline, so just sanity-check range.
    assert min(min(v) for v in by_user.values()) >= 880_000_000
    span = 120 * 86_400
    assert max(max(v) for v in by_user.values()) < 880_000_000 + span
